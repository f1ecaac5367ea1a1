//! Small reverse-mode autodiff engine over dense `f64` tensors.

mod checkpoint;
mod fft;
mod gradcheck;
mod layers;
mod params;
pub mod quant;
mod tape;
mod tensor;

pub use checkpoint::TensorArchive;
pub use gradcheck::{gradient_check, gradient_check_params, relative_error, GradCheckReport};
pub use layers::{Activation, CoreKind, LayerKind, LayerSpec, Stack};
pub use params::ParameterStore;
pub use tape::{Padding, Tape, Unary, Var};
pub use tensor::Tensor;
