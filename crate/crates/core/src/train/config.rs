use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::dlcf::ModelConfig;
use crate::error::{Error, Result};
use crate::schedule::ScheduleKind;
use crate::train::loss::LossWeights;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum LrDecay {
    #[default]
    Constant,
    /// Half-cosine from `lr` at step 1 down to zero after the last step.
    Cosine,
}

/// Every training hyperparameter. Read from TOML; missing keys take the defaults below.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub seed: u64,
    /// Optimizer steps. Each step draws `batch` instances with replacement.
    pub steps: usize,
    /// Instances per step (gradients are averaged).
    pub batch: usize,
    pub lr: f64,
    pub lr_decay: LrDecay,
    pub beta1: f64,
    pub beta2: f64,
    pub adam_eps: f64,
    /// Global gradient-norm ceiling; 0 disables clipping.
    pub grad_clip: f64,
    /// Diffusion length `T`.
    pub schedule_steps: usize,
    pub schedule: ScheduleKind,
    /// Write a checkpoint every this many steps; 0 writes only the final one.
    pub checkpoint_every: usize,
    /// Loss above this aborts the run.
    pub divergence_threshold: f64,
    /// Ablation: drop the bond channel; bonds are inferred from distances at sampling time.
    pub no_bond_gen: bool,
    /// Ablation: single-target denoiser; each pose is trained and sampled on its own.
    pub no_dlcf: bool,
    pub weights: LossWeights,
    pub model: ModelConfig,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            steps: 2000,
            batch: 1,
            lr: 1e-3,
            lr_decay: LrDecay::Constant,
            beta1: 0.9,
            beta2: 0.999,
            adam_eps: 1e-8,
            grad_clip: 1.0,
            schedule_steps: 100,
            schedule: ScheduleKind::Cosine,
            checkpoint_every: 0,
            divergence_threshold: 1e6,
            no_bond_gen: false,
            no_dlcf: false,
            weights: LossWeights::default(),
            model: ModelConfig::small(),
        }
    }
}

impl TrainConfig {
    pub fn from_toml_str(s: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(s).map_err(|e| Error::Parse(format!("train config: {e}")))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_toml_str(&std::fs::read_to_string(path)?)
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn validate(&self) -> Result<()> {
        for (name, v) in [("steps", self.steps), ("batch", self.batch), ("schedule_steps", self.schedule_steps)] {
            if v == 0 {
                return Err(Error::InvalidArgument(format!("{name} must be positive")));
            }
        }
        if !(self.lr > 0.0) || !(self.adam_eps > 0.0) {
            return Err(Error::InvalidArgument("lr and adam_eps must be positive".into()));
        }
        if !(0.0..1.0).contains(&self.beta1) || !(0.0..1.0).contains(&self.beta2) {
            return Err(Error::InvalidArgument("Adam betas must lie in [0, 1)".into()));
        }
        if !(self.grad_clip >= 0.0) || !(self.divergence_threshold > 0.0) {
            return Err(Error::InvalidArgument("grad_clip must be >= 0 and divergence_threshold > 0".into()));
        }
        if self.no_bond_gen && self.no_dlcf {
            return Err(Error::InvalidArgument(
                "no_bond_gen and no_dlcf are separate ablations and cannot be combined".into(),
            ));
        }
        self.weights.validate()?;
        self.effective_model().validate()
    }

    /// Learning rate used for optimizer step `step` (1-based).
    pub fn lr_at(&self, step: usize) -> f64 {
        match self.lr_decay {
            LrDecay::Constant => self.lr,
            LrDecay::Cosine => {
                let frac = (step - 1) as f64 / self.steps as f64;
                0.5 * self.lr * (1.0 + (std::f64::consts::PI * frac).cos())
            }
        }
    }

    /// Model configuration after applying the ablation flags.
    pub fn effective_model(&self) -> ModelConfig {
        let mut m = self.model.clone();
        if self.no_bond_gen {
            m.use_bonds = false;
        }
        if self.no_dlcf {
            m.targets = 1;
        }
        m
    }

    /// Weights after applying the ablation flags.
    pub fn effective_weights(&self) -> LossWeights {
        let mut w = self.weights;
        if self.no_bond_gen {
            w.bond = 0.0;
        }
        w
    }
}
