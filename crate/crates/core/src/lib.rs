//! Koopman neural forecasting.
//!
//! Observations are cut into segments, each segment is lifted into a
//! predefined dictionary of measurement functions whose inputs are learned
//! linear combinations of the segment, and the measurements are advanced
//! by linear operators: a trainable global matrix, a per-window operator
//! read off a single-head attention encoder, and a diagonal feedback
//! correction driven by the lookback prediction error.

pub mod autodiff;
pub mod data;
pub mod error;
pub mod eval;
pub mod measurements;
pub mod model;
pub mod nets;
pub mod spectral;
pub mod tensor;
pub mod training;

pub use error::{KnfError, Result};
pub use tensor::Mat;
