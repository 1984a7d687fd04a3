use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Cosine offset.
pub const COSINE_OFFSET: f64 = 0.008;
/// Per-step β bounds; the lower bound keeps every ᾱ sequence strictly decreasing.
pub const BETA_MIN: f64 = 1e-5;
pub const BETA_MAX: f64 = 0.9999;
/// Per-step retention of the bond channel once its rescaled clock has run past `T`.
pub const BOND_TAIL_DECAY: f64 = 0.9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum ScheduleKind {
    #[default]
    Cosine,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Channel {
    Position,
    Atom,
    Bond,
}

/// Explicit ᾱ tables for each channel, indexed `0..=T`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NoiseSchedule {
    pub steps: usize,
    pub kind: ScheduleKind,
    pub alpha_bar_pos: Vec<f64>,
    pub alpha_bar_atom: Vec<f64>,
    pub alpha_bar_bond: Vec<f64>,
}

fn cosine_alpha_bar(steps: usize) -> Vec<f64> {
    let f = |t: usize| {
        let x = (t as f64 / steps as f64 + COSINE_OFFSET) / (1.0 + COSINE_OFFSET) * std::f64::consts::FRAC_PI_2;
        x.cos().powi(2)
    };
    let f0 = f(0);
    let mut out = Vec::with_capacity(steps + 1);
    out.push(1.0);
    let mut prev_cont = 1.0;
    for t in 1..=steps {
        let cont = f(t) / f0;
        let beta = (1.0 - cont / prev_cont).clamp(BETA_MIN, BETA_MAX);
        prev_cont = cont;
        let last = *out.last().expect("nonempty");
        out.push(last * (1.0 - beta));
    }
    out
}

impl NoiseSchedule {
    pub fn new(steps: usize, kind: ScheduleKind) -> Result<Self> {
        if steps < 2 {
            return Err(Error::InvalidArgument(format!("need at least 2 diffusion steps, got {steps}")));
        }
        let pos = match kind {
            ScheduleKind::Cosine => cosine_alpha_bar(steps),
        };
        let bond = (0..=steps)
            .map(|t| {
                if 2 * t <= steps {
                    pos[2 * t]
                } else {
                    pos[steps] * BOND_TAIL_DECAY.powi((2 * t - steps) as i32)
                }
            })
            .collect();
        Ok(Self {
            steps,
            kind,
            alpha_bar_atom: pos.clone(),
            alpha_bar_pos: pos,
            alpha_bar_bond: bond,
        })
    }

    pub fn cosine(steps: usize) -> Result<Self> {
        Self::new(steps, ScheduleKind::Cosine)
    }

    fn table(&self, c: Channel) -> &[f64] {
        match c {
            Channel::Position => &self.alpha_bar_pos,
            Channel::Atom => &self.alpha_bar_atom,
            Channel::Bond => &self.alpha_bar_bond,
        }
    }

    pub fn check_t(&self, t: usize, lo: usize) -> Result<()> {
        if t < lo || t > self.steps {
            return Err(Error::TimestepOutOfRange {
                t,
                lo,
                hi: self.steps,
            });
        }
        Ok(())
    }

    /// ᾱ_t for a channel, `0 <= t <= T`.
    pub fn alpha_bar(&self, c: Channel, t: usize) -> f64 {
        self.table(c)[t]
    }

    /// One-step retention α_t = ᾱ_t / ᾱ_{t-1}, `1 <= t <= T`.
    pub fn alpha(&self, c: Channel, t: usize) -> f64 {
        let tab = self.table(c);
        tab[t] / tab[t - 1]
    }

    pub fn beta(&self, c: Channel, t: usize) -> f64 {
        1.0 - self.alpha(c, t)
    }

    /// Errors unless `steps` equals this schedule's step count.
    pub fn ensure_steps(&self, steps: usize) -> Result<()> {
        if steps != self.steps {
            return Err(Error::ScheduleMismatch {
                checkpoint: self.steps,
                requested: steps,
            });
        }
        Ok(())
    }
}
