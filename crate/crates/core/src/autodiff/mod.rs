//! Dense reverse-mode automatic differentiation and the Adam optimizer.

mod gradcheck;
mod graph;
mod params;
mod tensor;

pub use gradcheck::finite_diff_check;
pub use graph::{sigmoid, Graph, Var};
pub use params::{Adam, ParamId, ParamStore};
pub use tensor::Tensor;
