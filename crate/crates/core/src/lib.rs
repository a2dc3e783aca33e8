//! Learned-uncertainty robust adaptive control for control-affine systems.
//!
//! The crate is organised the way the method is used:
//!
//! - [`dynamics`]: control-affine plants, the planar quadrotor, RK4.
//! - [`gp`]: per-channel Gaussian process regression with derivative posteriors.
//! - [`bounds`]: high-probability uniform bounds on the remainder `h - nu_N`.
//! - [`ccm`]: contraction metrics, geodesics and the Riemannian feedback.
//! - [`l1`]: predictor, projection adaptation and low-pass control law.
//! - [`certificate`]: tube constants, feasibility of `(omega, Gamma)`, UUB curves.
//! - [`planning`]: obstacle environments, MPPI and iLQR planners.
//! - [`sim`]: closed-loop episodes and the learning campaign.

pub mod bounds;
pub mod ccm;
pub mod certificate;
pub mod dynamics;
pub mod error;
pub mod gp;
pub mod l1;
pub mod optim;
pub mod planning;
pub mod sampling;
pub mod sim;

pub use error::{Error, Result};
