use std::io;

use thiserror::Error;

/// Errors produced anywhere in the pipeline.
#[derive(Debug, Error)]
pub enum Error {
    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("loss must be a scalar, got shape {0:?}")]
    NonScalarLoss(Vec<usize>),

    #[error("non-finite value in {0}")]
    NonFinite(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("objective is not deterministic: {0} vs {1}")]
    NonDeterministic(f64, f64),

    #[error("timestep {t} out of range [{lo}, {hi}]")]
    TimestepOutOfRange { t: usize, lo: usize, hi: usize },

    #[error("degenerate posterior: no category is consistent with the inputs")]
    DegeneratePosterior,

    #[error("size mismatch: {0}")]
    SizeMismatch(String),

    #[error("empty pocket: no standard residue within {cutoff} Å of the ligand")]
    EmptyPocket { cutoff: f64 },

    #[error("k = {k} is not smaller than the {nodes} nodes of the pocket-ligand graph")]
    NeighborCount { k: usize, nodes: usize },

    #[error("schedule mismatch: checkpoint has T = {checkpoint}, requested {requested}")]
    ScheduleMismatch { checkpoint: usize, requested: usize },

    #[error("training diverged at step {step}: loss {loss}")]
    Diverged { step: usize, loss: f64 },

    #[error("rejection budget exhausted after {0} attempts")]
    RejectionBudget(usize),

    #[error("checkpoint format: {0}")]
    Checkpoint(String),

    #[error("parse error: {0}")]
    Parse(String),

    #[error(transparent)]
    Io(#[from] io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
