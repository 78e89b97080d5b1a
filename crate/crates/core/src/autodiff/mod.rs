//! Reverse-mode automatic differentiation over [`Tensor`](crate::tensor::Tensor)s.
//!
//! A [`Graph`] records ops as they run; [`Graph::backward`] sweeps the tape in
//! reverse and returns [`Gradients`] for every leaf reachable from the loss.

mod gradcheck;
mod graph;
pub(crate) mod kernels;
mod param;
#[cfg(test)]
mod tests;

pub use gradcheck::{grad_check, grad_check_coords, grad_check_params, relative_error, DEFAULT_EPS};
pub use graph::{
    mean_row_entropy, softmax_t, BnMode, Gradients, Graph, Var, BN_EPS, BN_MOMENTUM, LOG_CLAMP, TARGET_ROW_TOL,
};
pub use param::{sgd_step, ParamId, ParamStore, Parameter};
