//! Local-global behavior graphs: concept streams to daily heterogeneous
//! graphs, a heterogeneous graph network with attention pooling, temporal
//! self-attention over days, and a 4-class affect classifier.
//!
//! Numeric code is generic over [`Scalar`]; the aliases below fix it to
//! `f64` (the default everywhere) or `f32`.

pub mod checkpoint;
pub mod config;
pub mod dataset;
pub mod error;
pub mod gnn;
pub mod graph;
pub mod model;
pub mod numeric;
pub mod scalar;
pub mod selfcheck;
pub mod stream;
pub mod synth;
pub mod temporal;
pub mod training;

pub use error::{Error, Result};
pub use scalar::Scalar;

pub type Tensor64 = numeric::Tensor<f64>;
pub type Tensor32 = numeric::Tensor<f32>;
pub type Tape64 = numeric::Tape<f64>;
pub type Model64 = model::Model<f64>;
pub type Model32 = model::Model<f32>;
pub type Params64 = model::ModelParams<numeric::Tensor<f64>>;
pub type Sample64 = model::PreparedSample<f64>;
