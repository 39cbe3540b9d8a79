//! Dense tensors with reverse-mode automatic differentiation.

mod gradcheck;
mod graph;
pub mod kernels;
mod tensor;

pub use gradcheck::{grad_check, GradCheckReport};
pub use graph::{Gradients, Graph, NodeId, OpKind, Record};
pub use tensor::Tensor;
