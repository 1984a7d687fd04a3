use std::rc::Rc;

use serde::{Deserialize, Serialize};

use crate::chem::{centroid, num_pairs, pairs, BondVocab, Pose};
use crate::dataset::DualInstance;
use crate::dlcf::{DenoiseVars, DenoiserOutput};
use crate::error::{Error, Result};
use crate::numerics::{Tape, Tensor, Var};
use crate::schedule::{categorical_posterior, posterior_terms, Channel, NoiseSchedule, NoisyState};

/// Added to predicted probabilities inside the KL so an underflowed softmax entry stays finite.
pub const PROB_FLOOR: f64 = 1e-12;

/// Relative weights of the four objective terms.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LossWeights {
    pub position: f64,
    pub atom: f64,
    pub bond: f64,
    pub bond_length: f64,
    /// When positive, the position term at step t is scaled by min(ᾱ_t / (1 − ᾱ_t), snr_gamma)
    /// (min-SNR weighting). Zero keeps every t at weight 1.
    pub snr_gamma: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        Self {
            position: 1.0,
            atom: 100.0,
            bond: 100.0,
            bond_length: 1.0,
            snr_gamma: 0.0,
        }
    }
}

impl LossWeights {
    pub fn validate(&self) -> Result<()> {
        let all = [self.position, self.atom, self.bond, self.bond_length, self.snr_gamma];
        if all.iter().any(|w| !(*w >= 0.0) || !w.is_finite()) {
            return Err(Error::InvalidArgument(format!("loss weights must be finite and nonnegative: {self:?}")));
        }
        Ok(())
    }

    /// Factor applied to the position term at step `t`.
    pub fn position_factor(&self, sched: &NoiseSchedule, t: usize) -> f64 {
        if self.snr_gamma > 0.0 {
            let ab = sched.alpha_bar(Channel::Position, t);
            (ab / (1.0 - ab)).min(self.snr_gamma)
        } else {
            1.0
        }
    }
}

/// Unweighted terms and their weighted total.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct LossBreakdown {
    /// Per-pose mean squared atom displacement, summed over poses (Å²).
    pub position: f64,
    /// `position` times the per-step factor from [`LossWeights::position_factor`].
    pub position_scaled: f64,
    /// Mean per-atom KL between true-data and predicted one-step posteriors (nats).
    pub atom_kl: f64,
    /// Mean per-pair KL for bond types (nats).
    pub bond_kl: f64,
    /// Mean squared bond-length error over bonded pairs, summed over poses (Å²).
    pub bond_length: f64,
    pub total: f64,
}

impl LossBreakdown {
    pub fn weighted_total(&self, w: &LossWeights) -> f64 {
        w.position * self.position_scaled + w.atom * self.atom_kl + w.bond * self.bond_kl + w.bond_length * self.bond_length
    }

    pub(crate) fn accumulate(&mut self, other: &LossBreakdown, scale: f64) {
        self.position += scale * other.position;
        self.position_scaled += scale * other.position_scaled;
        self.atom_kl += scale * other.atom_kl;
        self.bond_kl += scale * other.bond_kl;
        self.bond_length += scale * other.bond_length;
        self.total += scale * other.total;
    }
}

/// Translates each complex so its pocket centroid sits at the origin.
/// Returns the centered instance and the per-target offsets that undo it.
pub fn center_instance(m: &DualInstance) -> Result<(DualInstance, Vec<[f64; 3]>)> {
    if m.pockets.iter().any(|p| p.is_empty()) {
        return Err(Error::InvalidArgument("cannot center an empty pocket".into()));
    }
    let offsets: Vec<[f64; 3]> = m.pockets.iter().map(|p| centroid(&p.coords)).collect();
    let centered = DualInstance {
        graph: m.graph.clone(),
        poses: m.poses.iter().zip(&offsets).map(|(x, o)| x.translated(neg(*o))).collect(),
        pockets: m.pockets.iter().zip(&offsets).map(|(p, o)| p.translated(neg(*o))).collect(),
        sources: m.sources.clone(),
    };
    Ok((centered, offsets))
}

/// Puts a centered pose back into the frame described by `offset`.
pub fn restore_pose(pose: &Pose, offset: [f64; 3]) -> Pose {
    pose.translated(offset)
}

fn neg(v: [f64; 3]) -> [f64; 3] {
    [-v[0], -v[1], -v[2]]
}

/// Records the objective on `tape` given the denoiser variables.
///
/// `m0` and `state` must describe the same (centered) complexes as the forward pass.
/// A missing bond head contributes a zero bond term.
pub fn loss_on_tape(
    tape: &mut Tape,
    vars: &DenoiseVars,
    m0: &DualInstance,
    state: &NoisyState,
    w: &LossWeights,
    sched: &NoiseSchedule,
) -> Result<(Var, LossBreakdown)> {
    w.validate()?;
    let n = m0.graph.n_atoms();
    let k_t = m0.n_targets();
    if vars.positions.len() != k_t || state.n_atoms() != n || state.n_targets() != k_t {
        return Err(Error::SizeMismatch("loss inputs disagree on atoms or targets".into()));
    }
    sched.check_t(state.t, 1)?;

    let mut position = tape.constant(Tensor::scalar(0.0));
    for (k, &x) in vars.positions.iter().enumerate() {
        let truth = tape.constant(Tensor::from_rows(&m0.poses[k].0));
        let d = tape.sub(x, truth);
        let sq = tape.square(d);
        let s = tape.sum_all(sq);
        let mse = tape.scale(s, 1.0 / n as f64);
        position = tape.add(position, mse);
    }

    let atom_kl = kl_term(tape, vars.atom_probs, m0.graph.atoms(), &state.atoms, Channel::Atom, state.t, sched)?;
    let bond_kl = match vars.bond_probs {
        Some(b) if num_pairs(n) > 0 => kl_term(tape, b, m0.graph.bonds(), &state.bonds, Channel::Bond, state.t, sched)?,
        _ => tape.constant(Tensor::scalar(0.0)),
    };

    let bonded: Vec<(usize, usize)> = pairs(n).filter(|&(i, j)| m0.graph.bond(i, j) != BondVocab::NONE).collect();
    let mut bond_length = tape.constant(Tensor::scalar(0.0));
    if !bonded.is_empty() {
        let a: Rc<[usize]> = bonded.iter().map(|b| b.0).collect();
        let b: Rc<[usize]> = bonded.iter().map(|b| b.1).collect();
        for (k, &x) in vars.positions.iter().enumerate() {
            let truth: Vec<f64> = bonded
                .iter()
                .map(|&(i, j)| crate::chem::distance(&m0.poses[k].0[i], &m0.poses[k].0[j]))
                .collect();
            let truth = tape.constant(Tensor::matrix(bonded.len(), 1, truth)?);
            let xa = tape.gather_rows(x, a.clone());
            let xb = tape.gather_rows(x, b.clone());
            let diff = tape.sub(xa, xb);
            let sq = tape.square(diff);
            let d2 = tape.row_sum(sq);
            let d = tape.sqrt(d2);
            let e = tape.sub(d, truth);
            let e2 = tape.square(e);
            let m = tape.mean_all(e2);
            bond_length = tape.add(bond_length, m);
        }
    }

    let factor = w.position_factor(sched, state.t);
    let position_scaled = tape.scale(position, factor);
    let terms = [(position_scaled, w.position), (atom_kl, w.atom), (bond_kl, w.bond), (bond_length, w.bond_length)];
    let mut total = tape.constant(Tensor::scalar(0.0));
    for (v, wt) in terms {
        let s = tape.scale(v, wt);
        total = tape.add(total, s);
    }

    let val = |v: Var| tape.value(v).item();
    let out = LossBreakdown {
        position: val(position),
        position_scaled: val(position_scaled),
        atom_kl: val(atom_kl),
        bond_kl: val(bond_kl),
        bond_length: val(bond_length),
        total: val(total),
    };
    for (name, x) in [
        ("position", out.position),
        ("atom_kl", out.atom_kl),
        ("bond_kl", out.bond_kl),
        ("bond_length", out.bond_length),
        ("total", out.total),
    ] {
        if !x.is_finite() {
            return Err(Error::NonFinite(format!("loss term {name}")));
        }
    }
    Ok((total, out))
}

/// Mean over entries of `KL(q(· | x_t, x0) || q(· | x_t, x̂0))`.
///
/// With `q_pred[j] = num[j] / Z`, the KL per entry is
/// `Σ_j q_true[j] log q_true[j] − Σ_j q_true[j] log num[j] + log Z`.
fn kl_term(
    tape: &mut Tape,
    probs: Var,
    truth: &[usize],
    x_t: &[usize],
    c: Channel,
    t: usize,
    sched: &NoiseSchedule,
) -> Result<Var> {
    let (rows, k) = tape.shape(probs);
    if rows != truth.len() || rows != x_t.len() {
        return Err(Error::SizeMismatch(format!("{c:?} head has {rows} rows for {} entries", truth.len())));
    }
    let mut lik = Vec::with_capacity(rows * k);
    let mut off = Vec::with_capacity(rows * k);
    let mut flat = Vec::new();
    let mut weights = Vec::new();
    let mut entropy = 0.0;
    let mut scale = 0.0;
    for i in 0..rows {
        let terms = posterior_terms(sched, c, t, x_t[i], k);
        scale = terms.prior_scale;
        lik.extend_from_slice(&terms.likelihood);
        off.extend_from_slice(&terms.prior_offset);
        let mut onehot = vec![0.0; k];
        onehot[truth[i]] = 1.0;
        let q = categorical_posterior(x_t[i], &onehot, t, c, sched)?;
        for (j, &p) in q.iter().enumerate() {
            if p > 0.0 {
                flat.push(i * k + j);
                weights.push(p);
                entropy += p * p.ln();
            }
        }
    }
    let lik = tape.constant(Tensor::matrix(rows, k, lik)?);
    let off = tape.constant(Tensor::matrix(rows, k, off)?);
    let floored = tape.add_scalar(probs, PROB_FLOOR);
    let prior = tape.scale(floored, scale);
    let prior = tape.add(prior, off);
    let num = tape.mul(lik, prior);
    let z = tape.row_sum(num);
    let log_z = tape.log(z);
    let sum_log_z = tape.sum_all(log_z);
    let picked = tape.gather_elems(num, flat.into());
    let log_picked = tape.log(picked);
    let wcol = tape.constant(Tensor::matrix(weights.len(), 1, weights)?);
    let cross = tape.mul(log_picked, wcol);
    let cross = tape.sum_all(cross);
    let kl = tape.sub(sum_log_z, cross);
    let kl = tape.add_scalar(kl, entropy);
    Ok(tape.scale(kl, 1.0 / rows as f64))
}

/// Objective from plain denoiser outputs.
pub fn compute_loss(
    output: &DenoiserOutput,
    m0: &DualInstance,
    state: &NoisyState,
    w: &LossWeights,
    sched: &NoiseSchedule,
) -> Result<LossBreakdown> {
    let mut tape = Tape::new();
    let vars = DenoiseVars {
        positions: output
            .positions
            .iter()
            .map(|p| tape.constant(Tensor::from_rows(&p.0)))
            .collect(),
        atom_probs: tape.constant(output.atom_probs.clone()),
        bond_probs: Some(tape.constant(output.bond_probs.clone())),
    };
    Ok(loss_on_tape(&mut tape, &vars, m0, state, w, sched)?.1)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::chem::{LigandGraph, Pocket};

    fn pocket(coords: Vec<[f64; 3]>) -> Pocket {
        let n = coords.len();
        Pocket {
            id: "p".into(),
            coords,
            elements: vec![0; n],
            residues: vec![0; n],
            residue_ids: (0..n as i64).collect(),
        }
    }

    #[test]
    fn two_atom_pocket_offset() {
        let m = DualInstance {
            graph: LigandGraph::new(vec![0]),
            poses: vec![Pose(vec![[1.0, 1.0, 0.0]])],
            pockets: vec![pocket(vec![[0.0; 3], [2.0, 0.0, 0.0]])],
            sources: vec![],
        };
        let (c, off) = center_instance(&m).unwrap();
        assert_eq!(off, vec![[1.0, 0.0, 0.0]]);
        assert_eq!(c.poses[0].0[0], [0.0, 1.0, 0.0]);
        assert_eq!(restore_pose(&c.poses[0], off[0]), m.poses[0]);
    }

    #[test]
    fn single_atom_offset_by_two() {
        let m = DualInstance {
            graph: LigandGraph::new(vec![0]),
            poses: vec![Pose(vec![[0.0; 3]])],
            pockets: vec![pocket(vec![[5.0, 0.0, 0.0]])],
            sources: vec![],
        };
        let state = NoisyState {
            t: 3,
            atoms: vec![0],
            bonds: vec![],
            positions: vec![Pose(vec![[0.0; 3]])],
        };
        let out = DenoiserOutput {
            positions: vec![Pose(vec![[2.0, 0.0, 0.0]])],
            atom_probs: Tensor::one_hot(&[0], 8),
            bond_probs: Tensor::zeros(&[0, 5]),
        };
        let w = LossWeights {
            position: 1.0,
            atom: 0.0,
            bond: 0.0,
            bond_length: 0.0,
            snr_gamma: 0.0,
        };
        let s = NoiseSchedule::cosine(10).unwrap();
        let l = compute_loss(&out, &m, &state, &w, &s).unwrap();
        assert_eq!(l.total, 4.0);
        assert_eq!(l.position, 4.0);
    }
}
