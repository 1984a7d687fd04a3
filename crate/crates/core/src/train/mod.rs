//! Objective, per-complex centering, the training loop and checkpoints.

mod checkpoint;
mod config;
mod fit;
mod loss;

pub use checkpoint::{Checkpoint, CheckpointMeta, CHECKPOINT_FORMAT};
pub use config::{LrDecay, TrainConfig};
pub use fit::{
    atom_count_histogram, evaluate, fit, fit_with, instance_gradients, instance_loss, training_view,
    write_loss_curve_csv, LossRecord, TrainOutcome,
};
pub use loss::{center_instance, compute_loss, loss_on_tape, restore_pose, LossBreakdown, LossWeights};
