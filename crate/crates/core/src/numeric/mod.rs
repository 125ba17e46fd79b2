//! Dense tensors, reverse-mode differentiation, Adam, and gradient checking.

mod adam;
mod gradcheck;
mod tape;
mod tensor;

pub use adam::{Adam, AdamConfig};
pub use gradcheck::{compare_gradients, finite_diff_check, GradCheckReport};
pub use tape::{Gradients, SparseRows, Tape, Var};
pub use tensor::{softmax, Tensor};
