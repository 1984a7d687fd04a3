use std::io::Write;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dataset::DualInstance;
use crate::dlcf::DenoiserModel;
use crate::error::{Error, Result};
use crate::numerics::{adam_step, AdamConfig, Gradients, Rng, Tape};
use crate::schedule::{forward_sample, NoiseSchedule, NoisyState};
use crate::train::checkpoint::{Checkpoint, CheckpointMeta, CHECKPOINT_FORMAT};
use crate::train::config::TrainConfig;
use crate::train::loss::{center_instance, loss_on_tape, LossBreakdown, LossWeights};

/// Batch-averaged loss terms after one optimizer step.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossRecord {
    pub step: usize,
    pub loss: LossBreakdown,
    pub grad_norm: f64,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub checkpoint: Checkpoint,
    pub curve: Vec<LossRecord>,
}

/// `histogram[n]` = instances whose ligand has `n` atoms.
pub fn atom_count_histogram(data: &[DualInstance]) -> Vec<usize> {
    let max = data.iter().map(|m| m.graph.n_atoms()).max().unwrap_or(0);
    let mut h = vec![0; max + 1];
    for m in data {
        h[m.graph.n_atoms()] += 1;
    }
    h
}

/// Centered training view of `m` with the targets the model consumes.
/// A single-target model sees one pose chosen by `rng`.
pub fn training_view(m: &DualInstance, targets: usize, rng: &mut Rng) -> Result<DualInstance> {
    let (c, _) = center_instance(m)?;
    match targets {
        1 => {
            let k = rng.below(c.n_targets());
            Ok(c.reordered(&[k]))
        }
        k if k == c.n_targets() => Ok(c),
        k => Err(Error::SizeMismatch(format!(
            "model expects {k} targets, instance has {}",
            c.n_targets()
        ))),
    }
}

/// Loss and parameter gradients for one centered instance at the noisy state `state`.
pub fn instance_gradients(
    model: &DenoiserModel,
    m0: &DualInstance,
    state: &NoisyState,
    weights: &LossWeights,
    sched: &NoiseSchedule,
) -> Result<(LossBreakdown, Gradients)> {
    let mut tape = Tape::new();
    let vars = model.forward(&mut tape, state, &m0.pockets, sched.steps)?;
    let (loss, breakdown) = loss_on_tape(&mut tape, &vars, m0, state, weights, sched)?;
    Ok((breakdown, tape.gradients(loss)?))
}

/// Loss without gradients, e.g. for held-out evaluation at chosen timesteps.
pub fn instance_loss(
    model: &DenoiserModel,
    m0: &DualInstance,
    state: &NoisyState,
    weights: &LossWeights,
    sched: &NoiseSchedule,
) -> Result<LossBreakdown> {
    let mut tape = Tape::new();
    let vars = model.forward(&mut tape, state, &m0.pockets, sched.steps)?;
    Ok(loss_on_tape(&mut tape, &vars, m0, state, weights, sched)?.1)
}

/// Mean loss over `data × ts`, one forward-noised state per pair drawn from `seed`.
pub fn evaluate(
    model: &DenoiserModel,
    data: &[DualInstance],
    ts: &[usize],
    weights: &LossWeights,
    sched: &NoiseSchedule,
    seed: u64,
) -> Result<LossBreakdown> {
    if data.is_empty() || ts.is_empty() {
        return Err(Error::InvalidArgument("evaluation needs instances and timesteps".into()));
    }
    let jobs: Vec<(usize, usize)> = (0..data.len()).flat_map(|i| ts.iter().map(move |&t| (i, t))).collect();
    let parts = jobs
        .par_iter()
        .map(|&(i, t)| {
            let mut rng = Rng::derive(seed, &[i as u64, t as u64]);
            let m0 = training_view(&data[i], model.config.targets, &mut rng)?;
            let state = forward_sample(&m0, t, sched, model.config.n_atom_types, &mut rng)?;
            instance_loss(model, &m0, &state, weights, sched)
        })
        .collect::<Result<Vec<_>>>()?;
    let mut mean = LossBreakdown::default();
    for p in &parts {
        mean.accumulate(p, 1.0 / parts.len() as f64);
    }
    Ok(mean)
}

fn global_grad_norm(model: &DenoiserModel) -> f64 {
    model
        .params
        .ids()
        .map(|id| model.params.grad(id).data().iter().map(|g| g * g).sum::<f64>())
        .sum::<f64>()
        .sqrt()
}

/// Trains a fresh model. `on_checkpoint` receives periodic and final checkpoints.
pub fn fit_with(
    data: &[DualInstance],
    cfg: &TrainConfig,
    mut on_checkpoint: impl FnMut(&Checkpoint) -> Result<()>,
) -> Result<TrainOutcome> {
    cfg.validate()?;
    if data.is_empty() {
        return Err(Error::InvalidArgument("training set is empty".into()));
    }
    for m in data {
        m.validate()?;
    }
    let mcfg = cfg.effective_model();
    let weights = cfg.effective_weights();
    let sched = NoiseSchedule::new(cfg.schedule_steps, cfg.schedule)?;
    let mut model = DenoiserModel::new(mcfg.clone(), Rng::derive(cfg.seed, &[0x1417]).seed())?;
    let mut adam = AdamConfig {
        lr: cfg.lr,
        beta1: cfg.beta1,
        beta2: cfg.beta2,
        eps: cfg.adam_eps,
    };
    let meta = |step: usize| CheckpointMeta {
        format: CHECKPOINT_FORMAT.into(),
        model: mcfg.clone(),
        schedule_steps: cfg.schedule_steps,
        schedule: cfg.schedule,
        n_atoms_histogram: atom_count_histogram(data),
        train_step: step,
        seed: cfg.seed,
        no_bond_gen: cfg.no_bond_gen,
        no_dlcf: cfg.no_dlcf,
    };

    let mut curve = Vec::with_capacity(cfg.steps);
    for step in 1..=cfg.steps {
        let parts = (0..cfg.batch)
            .into_par_iter()
            .map(|b| {
                let mut rng = Rng::derive(cfg.seed, &[step as u64, b as u64]);
                let m = &data[rng.below(data.len())];
                let m0 = training_view(m, mcfg.targets, &mut rng)?;
                let t = rng.between(1, sched.steps);
                let state = forward_sample(&m0, t, &sched, mcfg.n_atom_types, &mut rng)?;
                instance_gradients(&model, &m0, &state, &weights, &sched)
            })
            .collect::<Result<Vec<_>>>()?;

        let mut loss = LossBreakdown::default();
        let inv = 1.0 / cfg.batch as f64;
        for (breakdown, grads) in &parts {
            loss.accumulate(breakdown, inv);
            for (id, g) in grads.iter() {
                model.params.grad_mut(id).axpy(inv, g);
            }
        }
        if !loss.total.is_finite() || loss.total > cfg.divergence_threshold {
            return Err(Error::Diverged { step, loss: loss.total });
        }
        let grad_norm = global_grad_norm(&model);
        if cfg.grad_clip > 0.0 && grad_norm > cfg.grad_clip {
            model.params.scale_grads(cfg.grad_clip / grad_norm);
        }
        adam.lr = cfg.lr_at(step);
        adam_step(&mut model.params, &adam)?;
        curve.push(LossRecord { step, loss, grad_norm });

        if cfg.checkpoint_every > 0 && step % cfg.checkpoint_every == 0 && step != cfg.steps {
            on_checkpoint(&Checkpoint {
                meta: meta(step),
                model: model.clone(),
            })?;
        }
    }
    let checkpoint = Checkpoint {
        meta: meta(cfg.steps),
        model,
    };
    on_checkpoint(&checkpoint)?;
    Ok(TrainOutcome { checkpoint, curve })
}

/// Trains a fresh model; periodic checkpoints go to `dir/step_<n>.ckpt` when a directory is given.
pub fn fit(data: &[DualInstance], cfg: &TrainConfig, checkpoint_dir: Option<&Path>) -> Result<TrainOutcome> {
    fit_with(data, cfg, |c| match checkpoint_dir {
        Some(dir) => c.save(&dir.join(format!("step_{}.ckpt", c.meta.train_step))),
        None => Ok(()),
    })
}

/// Writes `step,total,position,atom_kl,bond_kl,bond_length,grad_norm` rows.
pub fn write_loss_curve_csv(w: &mut impl Write, curve: &[LossRecord]) -> Result<()> {
    writeln!(w, "step,total,position,atom_kl,bond_kl,bond_length,grad_norm")?;
    for r in curve {
        let l = &r.loss;
        writeln!(
            w,
            "{},{:e},{:e},{:e},{:e},{:e},{:e}",
            r.step, l.total, l.position, l.atom_kl, l.bond_kl, l.bond_length, r.grad_norm
        )?;
    }
    Ok(())
}
