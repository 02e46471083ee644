//! Dense tensors, reverse-mode differentiation, and gradient checking.

mod gradcheck;
mod graph;
mod tensor;

pub use gradcheck::{
    analytic_gradient, eval_scalar, grad_check, max_relative_error, numeric_gradient, FD_STEP,
    REL_FLOOR,
};
pub use graph::{Gradients, Graph, Op, Var};
pub use tensor::{cosine, cross_entropy, softmax, Tensor, NORM_FLOOR};
