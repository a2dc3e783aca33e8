//! Contraction metrics, minimal geodesics and the Riemannian-energy
//! feedback law.

mod control;
mod geodesic;
mod metric;

pub use control::{ccm_check, feedback_gain, CcmController, CcmReport, FeedbackTerms};
pub use geodesic::{energy_and_gradient, riemannian_energy, Collocation, Geodesic, GeodesicSolver};
pub use metric::{solve_care, ContractionMetric, MetricFile, MetricTerm};
