//! Counterfactual explanations for the shape of response curves.
//!
//! A regression network is swept over one active feature to produce aligned
//! response curves; functional PCA turns each curve into a short score
//! vector; NSGA-II then searches, per sample, for small changes to the
//! passive features that move the curve's scores by at least `epsilon`.
//! The modified features are aggregated into local and global relevance.
//!
//! Numerical code is generic over [`Scalar`] (`f32` or `f64`); the aliases
//! below name the common concrete types.

pub mod cfe;
pub mod curves;
pub mod data;
pub mod error;
pub mod explain;
pub mod fpca;
pub mod linalg;
pub mod pipeline;
pub mod regressor;
pub mod scalar;

pub use error::{Error, Result};
pub use scalar::Scalar;

pub type Dataset64 = data::Dataset<f64>;
pub type Dataset32 = data::Dataset<f32>;
pub type Mlp64 = regressor::Mlp<f64>;
pub type Mlp32 = regressor::Mlp<f32>;
pub type FpcaModel64 = fpca::FpcaModel<f64>;
pub type FpcaModel32 = fpca::FpcaModel<f32>;
pub type CfeResult64 = cfe::CfeResult<f64>;
pub type CfeResult32 = cfe::CfeResult<f32>;
