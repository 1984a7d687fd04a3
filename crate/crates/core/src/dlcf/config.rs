use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Denoiser hyperparameters. Stored in checkpoints.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ModelConfig {
    /// Node embedding width.
    pub d_v: usize,
    /// Edge embedding width.
    pub d_e: usize,
    /// Hidden width of every two-layer perceptron.
    pub hidden: usize,
    pub layers: usize,
    /// Nearest neighbors per node in each pocket graph.
    pub knn: usize,
    pub tau_dim: usize,
    pub n_atom_types: usize,
    pub n_bond_types: usize,
    pub pocket_features: usize,
    /// Number of targets whose poses are denoised jointly.
    pub targets: usize,
    /// Gaussian basis functions per distance feature.
    pub rbf: usize,
    pub rbf_max: f64,
    /// When false the bond channel is ignored on input and never predicted.
    pub use_bonds: bool,
    /// Added to squared distances in the coordinate update.
    pub coord_eps: f64,
    /// Scale of the last layer of the coordinate perceptron at initialization.
    pub coord_init_scale: f64,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            d_v: 128,
            d_e: 64,
            hidden: 128,
            layers: 6,
            knn: 24,
            tau_dim: 64,
            n_atom_types: 8,
            n_bond_types: 5,
            pocket_features: 29,
            targets: 2,
            rbf: 16,
            rbf_max: 10.0,
            use_bonds: true,
            coord_eps: 1e-6,
            coord_init_scale: 0.1,
        }
    }
}

impl ModelConfig {
    /// Downscaled model used by tests and quick experiments.
    pub fn small() -> Self {
        Self {
            d_v: 32,
            d_e: 16,
            hidden: 32,
            layers: 3,
            knn: 8,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("d_v", self.d_v),
            ("d_e", self.d_e),
            ("hidden", self.hidden),
            ("layers", self.layers),
            ("knn", self.knn),
            ("n_atom_types", self.n_atom_types),
            ("pocket_features", self.pocket_features),
            ("targets", self.targets),
            ("rbf", self.rbf),
        ];
        for (name, v) in positive {
            if v == 0 {
                return Err(Error::InvalidArgument(format!("model.{name} must be positive")));
            }
        }
        if self.tau_dim < 2 || self.tau_dim % 2 != 0 {
            return Err(Error::InvalidArgument("model.tau_dim must be even and at least 2".into()));
        }
        if self.n_bond_types < 2 {
            return Err(Error::InvalidArgument("model.n_bond_types must be at least 2".into()));
        }
        if !(self.rbf_max > 0.0) || !(self.coord_eps > 0.0) {
            return Err(Error::InvalidArgument("model.rbf_max and model.coord_eps must be positive".into()));
        }
        Ok(())
    }

    /// Width of the sorted pairwise-gap summary on ligand edges.
    pub fn n_gaps(&self) -> usize {
        (self.targets * (self.targets - 1) / 2).max(1)
    }
}
