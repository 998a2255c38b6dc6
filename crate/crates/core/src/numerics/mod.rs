//! Dense tensors, a reverse-mode computation record and finite-difference
//! gradient checking.

mod gradcheck;
mod graph;
mod tensor;

pub use gradcheck::{grad_check, CheckInput, GradCheck};
pub use graph::{elu, log_sigmoid, sigmoid, softmax, Graph, Var};
pub use tensor::Tensor;
