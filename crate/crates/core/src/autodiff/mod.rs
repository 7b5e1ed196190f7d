//! Minimal reverse-mode differentiation over dense `f64` tensors.
//!
//! The operation set is exactly what the embedding network and the episode
//! losses need: dense layers, squared distances, row-wise softmax and
//! log-sum-exp, spherical Gaussian log-densities, weighted means, and a few
//! indexing helpers. Variances enter through [`Op::ExpParam`] so that
//! gradient steps on the unconstrained log-variance can never produce a
//! non-positive variance.

mod gradcheck;
mod graph;
pub mod ops;
mod tensor;

pub use gradcheck::{grad_check, relative_error, GradCheckReport};
pub use graph::{Gradients, Graph, NodeId};
pub use ops::Op;
pub use tensor::Tensor;
