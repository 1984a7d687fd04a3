use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::chem::{centroid, num_pairs, Pocket, Pose};
use crate::dlcf::{DenoiserModel, DenoiserOutput};
use crate::error::{Error, Result};
use crate::eval::kabsch::kabsch_rmsd;
use crate::numerics::geom::{random_rotation, transform};
use crate::numerics::Rng;
use crate::sample::GeneratedSample;
use crate::schedule::NoisyState;

/// Size of the coordinate nudge used to witness cross-target coupling, in Å.
pub const PERTURBATION: f64 = 0.1;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SymmetryTolerances {
    pub r1: f64,
    pub r2_coord: f64,
    pub r2_type: f64,
    pub translation: f64,
    /// Smallest output change that counts as coupling.
    pub r3_min_effect: f64,
    /// Required fraction of trials showing coupling.
    pub r3_fraction: f64,
    pub r4_rmsd: f64,
    /// Required fraction of sample pairs above `r4_rmsd`.
    pub r4_fraction: f64,
}

impl Default for SymmetryTolerances {
    fn default() -> Self {
        Self {
            r1: 1e-9,
            r2_coord: 1e-6,
            r2_type: 1e-9,
            translation: 1e-12,
            r3_min_effect: 1e-8,
            r3_fraction: 0.99,
            r4_rmsd: 0.1,
            r4_fraction: 0.9,
        }
    }
}

/// Rigid-alignment residuals between the two poses of generated samples.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RigidityReport {
    pub rmsds: Vec<f64>,
    /// Minimum, 10th, 50th and 90th percentile, maximum.
    pub quantiles: [f64; 5],
    pub fraction_above: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SymmetryReport {
    pub trials: usize,
    pub tolerances: SymmetryTolerances,
    /// Target-swap deviation over coordinates and type simplices.
    pub r1_max_dev: f64,
    pub r2_coord_max_dev: f64,
    pub r2_type_max_dev: f64,
    /// Centering followed by restoring, compared with the input coordinates.
    pub translation_max_dev: f64,
    /// Smallest (over trials) max-norm change of pose 1 when pose 2 is nudged.
    pub r3_min_effect: f64,
    /// Fraction of trials whose effect exceeds the tolerance.
    pub r3_fraction: f64,
    pub r4: Option<RigidityReport>,
    pub r1_pass: bool,
    pub r2_pass: bool,
    pub r3_pass: bool,
    pub r4_pass: Option<bool>,
    /// Every trial showed zero cross-target effect.
    pub degenerate_coupling: bool,
}

/// Random denoiser input: a noisy state and pockets in arbitrary (uncentered) frames.
#[derive(Debug, Clone)]
pub struct RandomProblem {
    pub state: NoisyState,
    pub pockets: Vec<Pocket>,
}

pub fn random_problem(model: &DenoiserModel, steps: usize, rng: &mut Rng) -> RandomProblem {
    let c = &model.config;
    let n = rng.between(4, 10);
    let pockets: Vec<Pocket> = (0..c.targets)
        .map(|k| {
            let size = rng.between(c.knn.max(12), c.knn.max(12) + 18);
            let center = [rng.normal() * 10.0, rng.normal() * 10.0, rng.normal() * 10.0];
            Pocket {
                id: format!("random{k}"),
                coords: (0..size)
                    .map(|_| [0, 1, 2].map(|d| center[d] + 4.0 * rng.normal()))
                    .collect(),
                elements: (0..size).map(|_| rng.below(c.n_atom_types)).collect(),
                residues: (0..size).map(|_| rng.below(21)).collect(),
                residue_ids: (0..size as i64).collect(),
            }
        })
        .collect();
    let positions = pockets
        .iter()
        .map(|p| {
            let o = centroid(&p.coords);
            Pose((0..n).map(|_| [0, 1, 2].map(|d| o[d] + 1.5 * rng.normal())).collect())
        })
        .collect();
    let state = NoisyState {
        t: rng.between(1, steps),
        atoms: (0..n).map(|_| rng.below(c.n_atom_types)).collect(),
        bonds: (0..num_pairs(n)).map(|_| rng.below(c.n_bond_types)).collect(),
        positions,
    };
    RandomProblem { state, pockets }
}

/// Denoises complexes given in their own frames: each is centered on its pocket
/// centroid, denoised, and moved back.
pub fn denoise_in_frames(model: &DenoiserModel, state: &NoisyState, pockets: &[Pocket], steps: usize) -> Result<DenoiserOutput> {
    let offsets: Vec<[f64; 3]> = pockets.iter().map(|p| centroid(&p.coords)).collect();
    let neg = |o: &[f64; 3]| [-o[0], -o[1], -o[2]];
    let cp: Vec<Pocket> = pockets.iter().zip(&offsets).map(|(p, o)| p.translated(neg(o))).collect();
    let mut cs = state.clone();
    cs.positions = state.positions.iter().zip(&offsets).map(|(x, o)| x.translated(neg(o))).collect();
    let mut out = model.denoise(&cs, &cp, steps)?;
    out.positions = out.positions.iter().zip(&offsets).map(|(x, o)| x.translated(*o)).collect();
    Ok(out)
}

fn max_dev(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

fn pose_dev(a: &Pose, b: &Pose) -> f64 {
    a.0.iter()
        .zip(&b.0)
        .map(|(p, q)| max_dev(p, q))
        .fold(0.0, f64::max)
}

struct TrialResult {
    r1: f64,
    r2_coord: f64,
    r2_type: f64,
    translation: f64,
    r3: f64,
}

fn trial(model: &DenoiserModel, steps: usize, seed: u64, i: usize) -> Result<TrialResult> {
    let mut rng = Rng::derive(seed, &[i as u64]);
    let RandomProblem { state, pockets } = random_problem(model, steps, &mut rng);
    let k_t = pockets.len();
    let base = denoise_in_frames(model, &state, &pockets, steps)?;

    // R1: reverse the target order
    let order: Vec<usize> = (0..k_t).rev().collect();
    let sp: Vec<Pocket> = order.iter().map(|&k| pockets[k].clone()).collect();
    let sw = denoise_in_frames(model, &state.reordered(&order), &sp, steps)?;
    let mut r1 = max_dev(base.atom_probs.data(), sw.atom_probs.data()).max(max_dev(base.bond_probs.data(), sw.bond_probs.data()));
    for (pos, &k) in order.iter().enumerate() {
        r1 = r1.max(pose_dev(&sw.positions[pos], &base.positions[k]));
    }

    // R2: independent rigid motion per complex
    let motions: Vec<_> = (0..k_t)
        .map(|_| {
            let r = random_rotation(&mut rng);
            let t = [rng.normal() * 5.0, rng.normal() * 5.0, rng.normal() * 5.0];
            (r, t)
        })
        .collect();
    let mut moved = state.clone();
    let mut mp = pockets.clone();
    for (k, (r, t)) in motions.iter().enumerate() {
        moved.positions[k] = Pose(transform(r, *t, &state.positions[k].0));
        mp[k].coords = transform(r, *t, &pockets[k].coords);
    }
    let mo = denoise_in_frames(model, &moved, &mp, steps)?;
    let mut r2_coord: f64 = 0.0;
    for (k, (r, t)) in motions.iter().enumerate() {
        let expect = Pose(transform(r, *t, &base.positions[k].0));
        r2_coord = r2_coord.max(pose_dev(&mo.positions[k], &expect));
    }
    let r2_type = max_dev(base.atom_probs.data(), mo.atom_probs.data()).max(max_dev(base.bond_probs.data(), mo.bond_probs.data()));

    // centering round trip
    let mut translation: f64 = 0.0;
    for (x, p) in state.positions.iter().zip(&pockets) {
        let o = centroid(&p.coords);
        let back = x.translated([-o[0], -o[1], -o[2]]).translated(o);
        translation = translation.max(pose_dev(&back, x));
    }

    // R3: nudge one atom of the last pose, watch the first pose
    let mut nudged = state.clone();
    let a = rng.below(state.n_atoms());
    let dir = loop {
        let d = [rng.normal(), rng.normal(), rng.normal()];
        let n = (d[0] * d[0] + d[1] * d[1] + d[2] * d[2]).sqrt();
        if n > 1e-6 {
            break d.map(|v| v / n);
        }
    };
    let last = k_t - 1;
    for c in 0..3 {
        nudged.positions[last].0[a][c] += PERTURBATION * dir[c];
    }
    let no = denoise_in_frames(model, &nudged, &pockets, steps)?;
    let r3 = pose_dev(&no.positions[0], &base.positions[0]);

    Ok(TrialResult {
        r1,
        r2_coord,
        r2_type,
        translation,
        r3,
    })
}

/// Kabsch RMSD between pose 1 and pose 2 of every sample.
pub fn rigidity(samples: &[GeneratedSample], threshold: f64) -> Result<RigidityReport> {
    if samples.is_empty() {
        return Err(Error::InvalidArgument("no samples".into()));
    }
    let mut rmsds = samples
        .iter()
        .map(|s| {
            if s.poses.len() < 2 {
                return Err(Error::SizeMismatch("sample has fewer than two poses".into()));
            }
            kabsch_rmsd(&s.poses[0].0, &s.poses[1].0)
        })
        .collect::<Result<Vec<_>>>()?;
    let fraction_above = rmsds.iter().filter(|&&r| r > threshold).count() as f64 / rmsds.len() as f64;
    let unsorted = rmsds.clone();
    rmsds.sort_by(f64::total_cmp);
    let q = |p: f64| rmsds[((rmsds.len() - 1) as f64 * p).round() as usize];
    Ok(RigidityReport {
        rmsds: unsorted,
        quantiles: [q(0.0), q(0.1), q(0.5), q(0.9), q(1.0)],
        fraction_above,
    })
}

/// Runs the R1-R3 harness on random inputs and, when samples are given, the R4 witness.
pub fn verify_symmetries(
    model: &DenoiserModel,
    steps: usize,
    trials: usize,
    tol: &SymmetryTolerances,
    seed: u64,
    samples: Option<&[GeneratedSample]>,
) -> Result<SymmetryReport> {
    if trials == 0 {
        return Err(Error::InvalidArgument("trials must be at least 1".into()));
    }
    if model.config.targets < 2 {
        return Err(Error::InvalidArgument("symmetry checks need a model with at least two targets".into()));
    }
    let results = (0..trials)
        .into_par_iter()
        .map(|i| trial(model, steps, seed, i))
        .collect::<Result<Vec<_>>>()?;
    let fold = |f: fn(&TrialResult) -> f64| results.iter().map(f).fold(0.0, f64::max);
    let r1 = fold(|r| r.r1);
    let r2c = fold(|r| r.r2_coord);
    let r2t = fold(|r| r.r2_type);
    let tr = fold(|r| r.translation);
    let r3_min = results.iter().map(|r| r.r3).fold(f64::INFINITY, f64::min);
    let r3_fraction = results.iter().filter(|r| r.r3 > tol.r3_min_effect).count() as f64 / trials as f64;
    let r4 = samples.map(|s| rigidity(s, tol.r4_rmsd)).transpose()?;
    Ok(SymmetryReport {
        trials,
        tolerances: *tol,
        r1_max_dev: r1,
        r2_coord_max_dev: r2c,
        r2_type_max_dev: r2t,
        translation_max_dev: tr,
        r3_min_effect: r3_min,
        r3_fraction,
        r1_pass: r1 < tol.r1,
        r2_pass: r2c < tol.r2_coord && r2t < tol.r2_type && tr <= tol.translation,
        r3_pass: r3_fraction >= tol.r3_fraction,
        r4_pass: r4.as_ref().map(|r| r.fraction_above >= tol.r4_fraction),
        degenerate_coupling: results.iter().all(|r| r.r3 == 0.0),
        r4,
    })
}
