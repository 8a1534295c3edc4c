//! Reverse-mode automatic differentiation over dense `f64` tensors.

mod gradcheck;
pub(crate) mod kernels;
mod optim;
mod params;
mod tape;
mod tensor;

pub use gradcheck::{finite_difference_check, ABS_FLOOR};
pub use optim::{Adam, Optimizer, OptimizerConfig, SgdMomentum};
pub use params::{Parameter, ParameterSet};
pub use tape::{Tape, Var};
pub use tensor::Tensor;
