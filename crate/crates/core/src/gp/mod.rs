//! Gaussian process regression of the input-channel uncertainty.
//!
//! Each output channel has its own SE kernel and is conditioned
//! independently. Inputs are `z = (xi, x)` with the exogenous parameters
//! first.

mod data;
mod kernel;
mod model;

pub use data::{collect_lhs, generate_measurements, Dataset};
pub use kernel::{KernelRegularity, SquaredExponential};
pub use model::{select_hyperparameters, DerivativePosterior, GpModel, SpreadSummary};
