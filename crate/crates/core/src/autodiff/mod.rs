//! Reverse-mode automatic differentiation over dense `f64` tensors.

pub mod gradcheck;
pub mod graph;
pub mod nn;
pub mod params;
pub mod tensor;

pub use gradcheck::{grad_check, grad_check_coords, numeric_gradient, relative_error};
pub use graph::{Gradients, Graph, Var};
pub use nn::Mlp;
pub use params::{AdamConfig, Optimizer, ParamStore, RmsPropConfig};
pub use tensor::Tensor;
