//! Dense tensors, reverse-mode differentiation, optimization and seeded randomness.

mod adam;
mod container;
pub mod geom;
mod gradcheck;
mod params;
mod rng;
mod tape;
mod tensor;

pub use adam::{adam_step, AdamConfig};
pub use container::{TensorContainer, FORMAT_VERSION, MAGIC};
pub use gradcheck::{finite_diff_check, finite_diff_check_with, relative_error, GradCheckReport};
pub use params::{ParamId, ParamStore};
pub use rng::Rng;
pub(crate) use rng::mix64;
pub use tape::{Gradients, Tape, Var};
pub use tensor::Tensor;
