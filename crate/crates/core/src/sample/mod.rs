//! Reverse-process generation of a shared ligand graph with one pose per pocket.

use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::chem::{centroid, infer_bonds, LigandGraph, Pocket, Pose, ValidityConfig};
use crate::dlcf::{DenoiserModel, DenoiserOutput};
use crate::error::{Error, Result};
use crate::numerics::Rng;
use crate::schedule::{categorical_posterior, gaussian_posterior_coefs, sample_base, Channel, NoiseSchedule, NoisyState};
use crate::train::Checkpoint;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SampleMode {
    /// Joint denoising of atoms, bonds and both poses.
    Full,
    /// No bond channel; bonds are perceived from distances in each pose.
    NoBondGen,
    /// Single-target model: pose 1 and the graph first, then pose 2 with the graph held fixed.
    NoDlcfSequential,
}

impl SampleMode {
    pub const ALL: [SampleMode; 3] = [SampleMode::Full, SampleMode::NoBondGen, SampleMode::NoDlcfSequential];

    pub fn name(self) -> &'static str {
        match self {
            SampleMode::Full => "full",
            SampleMode::NoBondGen => "no-bond",
            SampleMode::NoDlcfSequential => "sequential",
        }
    }

    /// Checks that a model was trained for this mode.
    pub fn check_model(self, model: &DenoiserModel) -> Result<()> {
        let c = &model.config;
        let ok = match self {
            SampleMode::Full => c.targets == 2 && c.use_bonds,
            SampleMode::NoBondGen => c.targets == 2 && !c.use_bonds,
            SampleMode::NoDlcfSequential => c.targets == 1 && c.use_bonds,
        };
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidArgument(format!(
                "mode {} needs a different model (targets = {}, bonds = {})",
                self.name(),
                c.targets,
                c.use_bonds
            )))
        }
    }
}

impl fmt::Display for SampleMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for SampleMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "full" => Ok(SampleMode::Full),
            "no-bond" | "no_bond" | "no_bond_gen" => Ok(SampleMode::NoBondGen),
            "sequential" | "no_dlcf_sequential" => Ok(SampleMode::NoDlcfSequential),
            _ => Err(Error::InvalidArgument(format!(
                "unknown mode {s:?}; expected full, no-bond or sequential"
            ))),
        }
    }
}

/// How many atoms each sample gets.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AtomCount {
    Fixed(usize),
    /// Draw from `histogram[n]` = training ligands with `n` atoms.
    Histogram(Vec<usize>),
}

impl AtomCount {
    pub fn draw(&self, rng: &mut Rng) -> Result<usize> {
        match self {
            AtomCount::Fixed(0) => Err(Error::InvalidArgument("n_atoms must be at least 1".into())),
            AtomCount::Fixed(n) => Ok(*n),
            AtomCount::Histogram(h) => {
                let w: Vec<f64> = h.iter().enumerate().map(|(n, &c)| if n == 0 { 0.0 } else { c as f64 }).collect();
                if !w.iter().any(|&x| x > 0.0) {
                    return Err(Error::InvalidArgument("atom-count histogram is empty".into()));
                }
                Ok(rng.categorical(&w))
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleConfig {
    pub n_atoms: AtomCount,
    /// Must equal the checkpoint's `T`.
    pub steps: usize,
    pub seed: u64,
    pub count: usize,
    pub mode: SampleMode,
}

impl SampleConfig {
    pub fn validate(&self) -> Result<()> {
        if self.count == 0 {
            return Err(Error::InvalidArgument("count must be at least 1".into()));
        }
        if let AtomCount::Fixed(0) = self.n_atoms {
            return Err(Error::InvalidArgument("n_atoms must be at least 1".into()));
        }
        Ok(())
    }
}

/// One generated ligand: a shared graph and one pose per pocket, in the input pocket frames.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GeneratedSample {
    pub index: usize,
    pub mode: SampleMode,
    pub graph: LigandGraph,
    pub poses: Vec<Pose>,
    /// Bonds perceived separately in each pose (no-bond mode only); `graph` holds pose 1's.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pose_graphs: Option<Vec<LigandGraph>>,
    pub pockets: Vec<String>,
}

impl GeneratedSample {
    /// Graph to check pose `k` against.
    pub fn graph_for_pose(&self, k: usize) -> &LigandGraph {
        match &self.pose_graphs {
            Some(g) => &g[k],
            None => &self.graph,
        }
    }
}

/// Noise sources of one trajectory: categorical draws and one stream per pose.
#[derive(Debug, Clone)]
pub struct SampleStreams {
    pub types: Rng,
    pub poses: Vec<Rng>,
}

impl SampleStreams {
    /// Streams of sample `index`. Pose `k` reads stream `order[k]`, so passing a permuted
    /// order together with permuted pockets replays the same noise per pocket.
    pub fn for_sample(seed: u64, index: usize, order: &[usize]) -> Self {
        Self {
            types: Rng::derive(seed, &[index as u64, 1]),
            poses: order.iter().map(|&s| Rng::derive(seed, &[index as u64, 2, s as u64])).collect(),
        }
    }
}

/// One reverse transition `t → t−1` by posterior substitution.
///
/// Positions follow the Gaussian posterior per pose (pose `k` draws from `streams.poses[k]`);
/// atoms and bonds are drawn from the categorical posterior per entry. At `t = 1` the
/// position variance is zero, so `X(0) = X̂⁰`.
pub fn reverse_step(state: &NoisyState, out: &DenoiserOutput, sched: &NoiseSchedule, streams: &mut SampleStreams) -> Result<NoisyState> {
    let t = state.t;
    sched.check_t(t, 1)?;
    if out.positions.len() != state.n_targets() || streams.poses.len() != state.n_targets() {
        return Err(Error::SizeMismatch("reverse step: targets disagree".into()));
    }
    let (c0, ct, var) = gaussian_posterior_coefs(sched, t)?;
    let sd = var.sqrt();
    let positions = state
        .positions
        .iter()
        .zip(&out.positions)
        .zip(streams.poses.iter_mut())
        .map(|((xt, x0), rng)| {
            Pose(
                xt.0.iter()
                    .zip(&x0.0)
                    .map(|(a, b)| {
                        let mut p = [0.0; 3];
                        for c in 0..3 {
                            let noise = if sd > 0.0 { sd * rng.normal() } else { 0.0 };
                            p[c] = c0 * b[c] + ct * a[c] + noise;
                        }
                        p
                    })
                    .collect(),
            )
        })
        .collect();
    let atoms = draw_categories(&state.atoms, &out.atom_probs.data().to_vec(), out.atom_probs.cols(), t, Channel::Atom, sched, &mut streams.types)?;
    let bonds = draw_categories(&state.bonds, &out.bond_probs.data().to_vec(), out.bond_probs.cols(), t, Channel::Bond, sched, &mut streams.types)?;
    Ok(NoisyState {
        t: t - 1,
        atoms,
        bonds,
        positions,
    })
}

fn draw_categories(
    x_t: &[usize],
    probs: &[f64],
    k: usize,
    t: usize,
    c: Channel,
    sched: &NoiseSchedule,
    rng: &mut Rng,
) -> Result<Vec<usize>> {
    if probs.len() != x_t.len() * k {
        return Err(Error::SizeMismatch(format!("{c:?} probabilities do not match the state")));
    }
    x_t.iter()
        .enumerate()
        .map(|(i, &x)| {
            let row = &probs[i * k..(i + 1) * k];
            let z: f64 = row.iter().sum();
            let row: Vec<f64> = row.iter().map(|p| p / z).collect();
            let q = categorical_posterior(x, &row, t, c, sched)?;
            Ok(rng.categorical(&q))
        })
        .collect()
}

fn argmax(row: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in row.iter().enumerate() {
        if v > row[best] {
            best = i;
        }
    }
    best
}

fn centered(p: &Pocket) -> (Pocket, [f64; 3]) {
    let o = centroid(&p.coords);
    (p.translated([-o[0], -o[1], -o[2]]), o)
}

/// Runs `t = T..2` with reverse steps and returns the state at `t = 1` with its denoiser output.
/// `clamp` fixes atoms and bonds to a known graph at every step.
fn run_chain(
    model: &DenoiserModel,
    pockets: &[Pocket],
    sched: &NoiseSchedule,
    mut state: NoisyState,
    streams: &mut SampleStreams,
    clamp: Option<&LigandGraph>,
) -> Result<(NoisyState, DenoiserOutput)> {
    loop {
        if let Some(g) = clamp {
            state.atoms = g.atoms().to_vec();
            state.bonds = g.bonds().to_vec();
        }
        let out = model.denoise(&state, pockets, sched.steps)?;
        if state.t == 1 {
            return Ok((state, out));
        }
        state = reverse_step(&state, &out, sched, streams)?;
    }
}

fn argmax_posterior(x_t: &[usize], probs: &[f64], k: usize, c: Channel, sched: &NoiseSchedule) -> Result<Vec<usize>> {
    x_t.iter()
        .zip(probs.chunks(k))
        .map(|(&x, row)| {
            let z: f64 = row.iter().sum();
            let row: Vec<f64> = row.iter().map(|p| p / z).collect();
            Ok(argmax(&categorical_posterior(x, &row, 1, c, sched)?))
        })
        .collect()
}

/// Last reverse step with argmax in place of sampling; positions are the `t = 1` prediction.
fn discretize(state: &NoisyState, out: &DenoiserOutput, sched: &NoiseSchedule) -> Result<LigandGraph> {
    let atoms = argmax_posterior(&state.atoms, out.atom_probs.data(), out.atom_probs.cols(), Channel::Atom, sched)?;
    let bonds = argmax_posterior(&state.bonds, out.bond_probs.data(), out.bond_probs.cols(), Channel::Bond, sched)?;
    LigandGraph::from_parts(atoms, bonds)
}

/// Generates one sample with explicit noise streams. `pockets` are in their input frames.
pub fn generate_one(
    model: &DenoiserModel,
    sched: &NoiseSchedule,
    pockets: &[Pocket],
    mode: SampleMode,
    n_atoms: usize,
    index: usize,
    streams: &mut SampleStreams,
) -> Result<GeneratedSample> {
    mode.check_model(model)?;
    if pockets.len() != 2 || streams.poses.len() != 2 {
        return Err(Error::SizeMismatch("generation needs exactly two pockets and two pose streams".into()));
    }
    let (cp, offsets): (Vec<Pocket>, Vec<[f64; 3]>) = pockets.iter().map(centered).unzip();
    let n_types = model.config.n_atom_types;
    let (graph, centered_poses, pose_graphs) = match mode {
        SampleMode::Full | SampleMode::NoBondGen => {
            let base = sample_base(n_atoms, n_types, sched, &mut streams.types, &mut streams.poses)?;
            let (last, out) = run_chain(model, &cp, sched, base, streams, None)?;
            let g = discretize(&last, &out, sched)?;
            if mode == SampleMode::Full {
                (g, out.positions, None)
            } else {
                let cfg = ValidityConfig::default();
                let per_pose = out
                    .positions
                    .iter()
                    .map(|x| infer_bonds(g.atoms(), x, &cfg))
                    .collect::<Result<Vec<_>>>()?;
                (per_pose[0].clone(), out.positions, Some(per_pose))
            }
        }
        SampleMode::NoDlcfSequential => {
            let (s1, s2) = streams.poses.split_at_mut(1);
            let mut first = SampleStreams {
                types: streams.types.clone(),
                poses: vec![s1[0].clone()],
            };
            let base = sample_base(n_atoms, n_types, sched, &mut first.types, &mut first.poses)?;
            let (last, out1) = run_chain(model, &cp[..1], sched, base, &mut first, None)?;
            let g = discretize(&last, &out1, sched)?;
            let mut second = SampleStreams {
                types: first.types.clone(),
                poses: vec![s2[0].clone()],
            };
            let base2 = sample_base(n_atoms, n_types, sched, &mut second.types, &mut second.poses)?;
            let (_, out2) = run_chain(model, &cp[1..], sched, base2, &mut second, Some(&g))?;
            let poses = vec![out1.positions[0].clone(), out2.positions[0].clone()];
            (g, poses, None)
        }
    };
    let poses = centered_poses
        .iter()
        .zip(&offsets)
        .map(|(x, o)| x.translated(*o))
        .collect();
    Ok(GeneratedSample {
        index,
        mode,
        graph,
        poses,
        pose_graphs,
        pockets: pockets.iter().map(|p| p.id.clone()).collect(),
    })
}

/// Generates `config.count` samples for the pocket pair, in parallel over samples.
pub fn generate(pockets: &[Pocket], ckpt: &Checkpoint, config: &SampleConfig) -> Result<Vec<GeneratedSample>> {
    generate_with_order(pockets, ckpt, config, &[0, 1])
}

/// As [`generate`], with pose `k` drawing its noise from stream `order[k]`.
pub fn generate_with_order(
    pockets: &[Pocket],
    ckpt: &Checkpoint,
    config: &SampleConfig,
    order: &[usize],
) -> Result<Vec<GeneratedSample>> {
    config.validate()?;
    if ckpt.meta.schedule_steps != config.steps {
        return Err(Error::ScheduleMismatch {
            checkpoint: ckpt.meta.schedule_steps,
            requested: config.steps,
        });
    }
    config.mode.check_model(&ckpt.model)?;
    for p in pockets {
        p.validate()?;
    }
    let sched = ckpt.schedule()?;
    (0..config.count)
        .into_par_iter()
        .map(|i| {
            let n = config.n_atoms.draw(&mut Rng::derive(config.seed, &[i as u64, 0]))?;
            let mut streams = SampleStreams::for_sample(config.seed, i, order);
            generate_one(&ckpt.model, &sched, pockets, config.mode, n, i, &mut streams)
        })
        .collect()
}
