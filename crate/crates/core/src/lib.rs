//! Joint diffusion over one shared ligand graph and two pocket-specific poses.
//!
//! The crate covers the whole pipeline: deriving paired training tuples from
//! single-target complexes ([`dataset`]), the forward noising process and
//! posteriors ([`schedule`]), the dual-pocket fused message-passing denoiser
//! ([`dlcf`]), training ([`train`]), reverse sampling including the ablation
//! modes ([`sample`]) and metrics plus the symmetry verifier ([`eval`]).

pub mod chem;
pub mod dataset;
pub mod dlcf;
pub mod error;
pub mod eval;
pub mod numerics;
pub mod sample;
pub mod schedule;
pub mod train;

pub use error::{Error, Result};
