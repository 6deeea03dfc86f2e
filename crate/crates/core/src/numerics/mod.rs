//! Dense arrays, array operations, reverse-mode differentiation and
//! finite-difference gradient checking.

mod gradcheck;
pub mod ops;
mod tape;
mod tensor;

pub use gradcheck::{finite_diff_check, relative_error, GradCheckConfig, GradCheckReport, Probe};
pub use ops::{avgpool, cross_entropy, matmul, minmax_normalize, mlp2_forward, mse, softmax};
pub use tape::{Grads, Tape, Var};
pub use tensor::{GradPair, Tensor};
