use serde::{Deserialize, Serialize};

use crate::chem::{num_pairs, BondVocab, LigandGraph, Pose};
use crate::dataset::DualInstance;
use crate::error::{Error, Result};
use crate::numerics::Rng;
use crate::schedule::noise::{Channel, NoiseSchedule};

/// Mixing kernel family of a categorical channel.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Kernel {
    /// Resample uniformly over all categories.
    Uniform,
    /// Jump to the absorbing category with the given index.
    Absorbing(usize),
}

impl Kernel {
    pub fn for_channel(c: Channel) -> Self {
        match c {
            Channel::Bond => Kernel::Absorbing(BondVocab::NONE),
            _ => Kernel::Uniform,
        }
    }

    /// Row-stochastic matrix `Q[i][j] = P(next = j | current = i)` with retention `alpha`.
    pub fn matrix(self, alpha: f64, k: usize) -> Vec<Vec<f64>> {
        (0..k)
            .map(|i| (0..k).map(|j| self.entry(alpha, k, i, j)).collect())
            .collect()
    }

    pub fn entry(self, alpha: f64, k: usize, i: usize, j: usize) -> f64 {
        let keep = if i == j { alpha } else { 0.0 };
        match self {
            Kernel::Uniform => keep + (1.0 - alpha) / k as f64,
            Kernel::Absorbing(a) => keep + if j == a { 1.0 - alpha } else { 0.0 },
        }
    }

    /// Draws `next` given `current`.
    pub fn sample(self, alpha: f64, k: usize, current: usize, rng: &mut Rng) -> usize {
        if rng.bernoulli(alpha) {
            return current;
        }
        match self {
            Kernel::Uniform => rng.below(k),
            Kernel::Absorbing(a) => a,
        }
    }
}

/// Factors of the one-step categorical posterior for a fixed observed `x_t`:
/// `q(x_{t-1} = j) ∝ likelihood[j] · (prior_scale · x̂0[j] + prior_offset[j])`.
#[derive(Debug, Clone, PartialEq)]
pub struct PosteriorTerms {
    pub likelihood: Vec<f64>,
    pub prior_scale: f64,
    pub prior_offset: Vec<f64>,
}

pub fn posterior_terms(sched: &NoiseSchedule, c: Channel, t: usize, x_t: usize, k: usize) -> PosteriorTerms {
    let kernel = Kernel::for_channel(c);
    let a = sched.alpha(c, t);
    let ab_prev = sched.alpha_bar(c, t - 1);
    let likelihood = (0..k).map(|j| kernel.entry(a, k, j, x_t)).collect();
    let prior_offset = (0..k).map(|j| kernel.entry(ab_prev, k, usize::MAX, j)).collect();
    PosteriorTerms {
        likelihood,
        prior_scale: ab_prev,
        prior_offset,
    }
}

/// `q(x_{t-1} | x_t, x̂0)` over categories for one entry of a categorical channel.
pub fn categorical_posterior(x_t: usize, x0_hat: &[f64], t: usize, c: Channel, sched: &NoiseSchedule) -> Result<Vec<f64>> {
    sched.check_t(t, 1)?;
    let k = x0_hat.len();
    if x_t >= k {
        return Err(Error::InvalidArgument(format!("category {x_t} out of {k}")));
    }
    let total: f64 = x0_hat.iter().sum();
    if x0_hat.iter().any(|&p| !(p >= 0.0)) || (total - 1.0).abs() > 1e-9 {
        return Err(Error::InvalidArgument("x̂0 must be a probability vector".into()));
    }
    let terms = posterior_terms(sched, c, t, x_t, k);
    let mut p: Vec<f64> = (0..k)
        .map(|j| terms.likelihood[j] * (terms.prior_scale * x0_hat[j] + terms.prior_offset[j]))
        .collect();
    let z: f64 = p.iter().sum();
    if !(z > 0.0) || !z.is_finite() {
        return Err(Error::DegeneratePosterior);
    }
    p.iter_mut().for_each(|v| *v /= z);
    Ok(p)
}

/// Mean coefficients `(c0, ct)` and variance of `q(x_{t-1} | x_t, x̂0)` for the position chain.
pub fn gaussian_posterior_coefs(sched: &NoiseSchedule, t: usize) -> Result<(f64, f64, f64)> {
    sched.check_t(t, 1)?;
    if t == 1 {
        return Ok((1.0, 0.0, 0.0));
    }
    let c = Channel::Position;
    let ab = sched.alpha_bar(c, t);
    let ab_prev = sched.alpha_bar(c, t - 1);
    let a = sched.alpha(c, t);
    let beta = 1.0 - a;
    let c0 = ab_prev.sqrt() * beta / (1.0 - ab);
    let ct = a.sqrt() * (1.0 - ab_prev) / (1.0 - ab);
    let var = beta * (1.0 - ab_prev) / (1.0 - ab);
    Ok((c0, ct, var))
}

/// Per-coordinate posterior mean and the shared variance.
pub fn gaussian_posterior(x_t: &[f64], x0_hat: &[f64], t: usize, sched: &NoiseSchedule) -> Result<(Vec<f64>, f64)> {
    if x_t.len() != x0_hat.len() {
        return Err(Error::SizeMismatch("x_t and x̂0 lengths differ".into()));
    }
    let (c0, ct, var) = gaussian_posterior_coefs(sched, t)?;
    Ok((x0_hat.iter().zip(x_t).map(|(a, b)| c0 * a + ct * b).collect(), var))
}

/// Partially noised ligand: atom and bond categories plus one coordinate set per target.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NoisyState {
    pub t: usize,
    pub atoms: Vec<usize>,
    /// Packed pair categories (see [`crate::chem::pair_index`]).
    pub bonds: Vec<usize>,
    pub positions: Vec<Pose>,
}

impl NoisyState {
    pub fn n_atoms(&self) -> usize {
        self.atoms.len()
    }

    pub fn n_targets(&self) -> usize {
        self.positions.len()
    }

    pub fn graph(&self) -> LigandGraph {
        LigandGraph::from_parts(self.atoms.clone(), self.bonds.clone()).expect("state sizes are consistent")
    }

    /// The uncorrupted state at `t = 0`.
    pub fn clean(m0: &DualInstance) -> Self {
        Self {
            t: 0,
            atoms: m0.graph.atoms().to_vec(),
            bonds: m0.graph.bonds().to_vec(),
            positions: m0.poses.clone(),
        }
    }

    pub fn reordered(&self, order: &[usize]) -> Self {
        Self {
            positions: order.iter().map(|&k| self.positions[k].clone()).collect(),
            ..self.clone()
        }
    }
}

/// Samples the closed-form t-step marginal of every channel independently.
pub fn forward_sample(m0: &DualInstance, t: usize, sched: &NoiseSchedule, n_atom_types: usize, rng: &mut Rng) -> Result<NoisyState> {
    sched.check_t(t, 1)?;
    let ab_x = sched.alpha_bar(Channel::Position, t);
    let (sa, sn) = (ab_x.sqrt(), (1.0 - ab_x).sqrt());
    let positions = m0
        .poses
        .iter()
        .map(|p| {
            Pose(
                p.0.iter()
                    .map(|x| x.map(|v| sa * v + sn * rng.normal()))
                    .collect(),
            )
        })
        .collect();
    let ab_v = sched.alpha_bar(Channel::Atom, t);
    let atoms = m0
        .graph
        .atoms()
        .iter()
        .map(|&a| Kernel::Uniform.sample(ab_v, n_atom_types, a, rng))
        .collect();
    let ab_b = sched.alpha_bar(Channel::Bond, t);
    let kernel = Kernel::for_channel(Channel::Bond);
    let bonds = m0
        .graph
        .bonds()
        .iter()
        .map(|&b| kernel.sample(ab_b, 0, b, rng))
        .collect();
    Ok(NoisyState {
        t,
        atoms,
        bonds,
        positions,
    })
}

/// Terminal prior at `t = T`: standard normal coordinates per target (one stream each),
/// uniform atom types, no bonds.
pub fn sample_base(
    n_atoms: usize,
    n_atom_types: usize,
    sched: &NoiseSchedule,
    types_rng: &mut Rng,
    pose_rngs: &mut [Rng],
) -> Result<NoisyState> {
    if n_atoms == 0 {
        return Err(Error::InvalidArgument("n_atoms must be at least 1".into()));
    }
    let positions = pose_rngs
        .iter_mut()
        .map(|r| Pose((0..n_atoms).map(|_| [r.normal(), r.normal(), r.normal()]).collect()))
        .collect();
    Ok(NoisyState {
        t: sched.steps,
        atoms: (0..n_atoms).map(|_| types_rng.below(n_atom_types)).collect(),
        bonds: vec![BondVocab::NONE; num_pairs(n_atoms)],
        positions,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn t1_one_hot_posterior_is_delta() {
        let s = NoiseSchedule::cosine(50).unwrap();
        for (c, observable) in [(Channel::Atom, vec![0, 1, 2, 3, 4]), (Channel::Bond, vec![0, 2])] {
            for x_t in observable {
                let mut x0 = vec![0.0; 5];
                x0[2] = 1.0;
                let p = categorical_posterior(x_t, &x0, 1, c, &s).unwrap();
                assert_eq!(p, vec![0.0, 0.0, 1.0, 0.0, 0.0], "{c:?} x_t={x_t}");
            }
        }
    }

    #[test]
    fn degenerate_posterior_detected() {
        // bond observed as "single" at t while x̂0 puts all mass on "none": impossible under absorption
        let s = NoiseSchedule::cosine(10).unwrap();
        let mut x0 = vec![0.0; 5];
        x0[0] = 1.0;
        assert!(matches!(
            categorical_posterior(1, &x0, 1, Channel::Bond, &s),
            Err(Error::DegeneratePosterior)
        ));
    }

    #[test]
    fn gaussian_t1_returns_prediction() {
        let s = NoiseSchedule::cosine(50).unwrap();
        let (m, v) = gaussian_posterior(&[3.0, -1.0], &[0.25, 7.0], 1, &s).unwrap();
        assert_eq!(m, vec![0.25, 7.0]);
        assert_eq!(v, 0.0);
        assert!(gaussian_posterior(&[0.0], &[0.0], 51, &s).is_err());
    }

    #[test]
    fn gaussian_mean_is_affine_in_inputs() {
        // shifting x̂0 by v and x_t by sqrt(ab_t) v moves the mean by sqrt(ab_{t-1}) v
        let s = NoiseSchedule::cosine(50).unwrap();
        let (t, v) = (9, 2.0);
        let ab = s.alpha_bar(Channel::Position, t);
        let ab_prev = s.alpha_bar(Channel::Position, t - 1);
        let (m, var) = gaussian_posterior(&[0.3], &[-0.2], t, &s).unwrap();
        let (m2, var2) = gaussian_posterior(&[0.3 + ab.sqrt() * v], &[-0.2 + v], t, &s).unwrap();
        assert!((m2[0] - m[0] - ab_prev.sqrt() * v).abs() < 1e-12);
        assert_eq!(var, var2);
    }

    #[test]
    fn base_has_no_bonds() {
        let s = NoiseSchedule::cosine(10).unwrap();
        let mut r = Rng::new(1);
        let mut poses = [Rng::new(2), Rng::new(3)];
        let st = sample_base(7, 8, &s, &mut r, &mut poses).unwrap();
        assert!(st.bonds.iter().all(|&b| b == BondVocab::NONE));
        assert_eq!(st.bonds.len(), 21);
        assert_eq!(st.t, 10);
        assert!(sample_base(0, 8, &s, &mut r, &mut poses).is_err());
    }
}
