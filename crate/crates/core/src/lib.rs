//! Compositional zero-shot retrieval with disentangled attribute and object
//! features.
//!
//! The numeric core, model and disentangler are generic over [`Scalar`]
//! (`f32` or `f64`). Data handling, training and evaluation run in `f64`.

pub mod disentangle;
pub mod embedding_store;
pub mod error;
pub mod evaluation;
pub mod gradcheck_suite;
pub mod model;
pub mod numeric;
pub mod rng;
pub mod scalar;
pub mod training;

pub use error::{Error, Result};
pub use scalar::Scalar;

pub type Tensor64 = numeric::Tensor<f64>;
pub type Tensor32 = numeric::Tensor<f32>;
pub type Graph64 = numeric::Graph<f64>;
pub type Graph32 = numeric::Graph<f32>;
pub type ModelParams64 = model::ModelParams<f64>;
pub type ModelParams32 = model::ModelParams<f32>;
