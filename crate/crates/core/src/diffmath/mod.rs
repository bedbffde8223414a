//! Reverse-mode differentiation over dense vectors and matrices, Adam, and
//! gradient checking.

mod adam;
pub mod checkpoint;
mod gradcheck;
mod graph;
mod tensor;

pub use adam::{Adam, AdamConfig};
pub use gradcheck::{
    grad_check, jvp_check, relative_error, GradCheckOptions, GradCheckReport, ParamCheck,
    REL_ERROR_FLOOR,
};
pub use graph::{
    Evaluation, Gradients, Graph, GraphBuilder, Inputs, NodeId, Op, ParamStore, BCE_CLAMP, L2_EPS,
};
pub use tensor::Tensor;
