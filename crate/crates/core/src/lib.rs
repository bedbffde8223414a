//! Pair-wise HOI detection with language-prior guided feature attention,
//! stream fusion and clustered verb-object classifiers.

pub mod clustering;
pub mod config;
pub mod diffmath;
pub mod embeddings;
pub mod error;
pub mod evaluation;
pub mod features;
pub mod network;
pub mod pipeline;
pub mod scalar;
pub mod seed;
pub mod training;

pub use error::{Error, Result};
pub use scalar::Scalar;

/// Double-precision instantiations.
pub type Model = network::PdNet<f64>;
pub type Tensor = diffmath::Tensor<f64>;
pub type Params = diffmath::ParamStore<f64>;
pub type Graph = diffmath::Graph<f64>;
pub type Model32 = network::PdNet<f32>;
