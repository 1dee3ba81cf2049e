//! Dense tensors and the differentiable operations the model is built from.

mod graph;
mod tensor;

pub use graph::{gelu, sigmoid, Elementwise, Graph, NodeId};
pub use tensor::Tensor;
