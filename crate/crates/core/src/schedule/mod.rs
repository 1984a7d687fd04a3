//! Noise schedules, forward corruption, one-step posteriors and the terminal prior.

mod noise;
mod process;

pub use noise::{Channel, NoiseSchedule, ScheduleKind, BETA_MAX, BETA_MIN, BOND_TAIL_DECAY, COSINE_OFFSET};
pub use process::{
    categorical_posterior, forward_sample, gaussian_posterior, gaussian_posterior_coefs, posterior_terms,
    sample_base, Kernel, NoisyState, PosteriorTerms,
};
