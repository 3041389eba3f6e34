//! Reverse-mode automatic differentiation over [`Tensor`](crate::tensor::Tensor)s.

mod gradcheck;
pub(crate) mod kernels;
mod tape;

pub use gradcheck::{grad_check, grad_check_coords, relative_error, GradCheckReport, REL_ERROR_FLOOR};
pub use tape::{Activation, Gradients, OpKind, Padding, Tape, Var};
