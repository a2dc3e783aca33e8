//! Desired trajectories: obstacle environments, an MPPI planner and an
//! iterative LQR trajectory optimizer, both running on a tagged vector field.

mod env;
mod ilqr;
mod mppi;
mod trajectory;

pub use env::{circle_polyline, convex_hull, tube_inflate, Environment, Point, Polygon, Workspace, DILATION_SIDES};
pub use ilqr::{trajopt_lqr, trim_input, IlqrParams, IlqrResult};
pub use mppi::{mppi_plan, Mppi, MppiCost, MppiParams, MppiPlan, MppiStep};
pub use trajectory::{DynamicsTag, PlannedTrajectory};
