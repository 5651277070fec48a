//! Lightweight inverse tone mapping networks built from improved residual
//! blocks and contrast-aware channel attention, together with the tensor
//! kernels, reverse-mode differentiation, training loop, image pipeline and
//! quality metrics they need.

pub mod autograd;
pub mod data;
pub mod error;
pub mod metrics;
pub mod model;
pub mod ops;
mod par;
pub mod tensor;
pub mod tensor_io;
pub mod train;

pub use autograd::{
    finite_diff_check, GradCheck, GradCheckReport, ParamId, ParamStore, Parameter, Tape, Var,
};
pub use error::{Error, Result};
pub use model::{IrnetModel, Mode, ModelConfig};
pub use par::current_threads;
pub use tensor::{Shape, Tensor};
