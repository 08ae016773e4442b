//! Penalized neural quantile regression for macroeconomic risk forecasts.
//!
//! The pipeline runs from a monthly panel ([`dataio`]) through a small
//! feed-forward network ([`net`]) trained on pinball loss with a quadratic
//! weight penalty ([`loss`], [`train`]), re-estimated on expanding windows.
//! Hyperparameters are chosen on a validation segment either over a raw grid
//! or along a one-dimensional complexity index ([`complexity`], [`select`]),
//! and forecasts are scored against a recursive unconditional-quantile
//! benchmark ([`eval`]).

pub mod complexity;
pub mod dataio;
pub mod error;
pub mod eval;
pub mod loss;
pub mod net;
pub mod select;
pub mod train;

pub use error::{Error, Result};
