//! Routing congestion prediction on placed netlists with a heterogeneous
//! graph network.
//!
//! Pipeline: [`netlist`] parsing, [`graph`] construction, [`features`],
//! the [`model`] on top of the [`autodiff`] tape, [`train`]ing against
//! [`labels`] from the RUDY estimator, and [`metrics`].
//!
//! Numeric code is generic over [`Scalar`] (`f32` or `f64`); the aliases below
//! fix the precision.

pub mod autodiff;
pub mod config;
pub mod error;
pub mod features;
pub mod graph;
pub mod heatmap;
pub mod labels;
pub mod matrix;
pub mod metrics;
pub mod model;
pub mod netlist;
pub mod scalar;
pub mod synth;
pub mod train;

pub use error::{Error, ErrorClass, Result};
pub use matrix::Matrix;
pub use scalar::Scalar;

pub type Matrix64 = Matrix<f64>;
pub type Matrix32 = Matrix<f32>;
pub type Tape64 = autodiff::Tape<f64>;
pub type Tape32 = autodiff::Tape<f32>;
pub type Params64 = model::ModelParams<f64>;
pub type Params32 = model::ModelParams<f32>;
pub type AdamW64 = train::AdamW<f64>;
pub type AdamW32 = train::AdamW<f32>;
