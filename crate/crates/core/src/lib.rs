//! Safe navigation with corridor-constrained model predictive contour control.
//!
//! The stack is organised bottom-up:
//!
//! - [`geometry`]: arc-length splines with tangent, normal and curvature queries.
//! - [`world`]: occupancy grids, DDA raycasting, simulated range scans and
//!   procedural world generation.
//! - [`planner`]: grid A* with line-of-sight shortcutting, fitted to a spline.
//! - [`corridor`]: raycast offset sampling and LP-fitted polynomial corridors.
//! - [`clf_cbf`]: Lyapunov and barrier functions, their derivatives, and a
//!   single-step CLF-CBF quadratic program filter.
//! - [`mpcc`]: the contour controller (unicycle + virtual progress), solved by
//!   SQP over a dense dual active-set QP.
//! - [`sac`]: soft actor-critic adaptation of the barrier gains.
//! - [`sim`]: closed-loop episodes, benchmarks, traces and plots.

pub mod clf_cbf;
pub mod config;
pub mod corridor;
pub mod error;
pub mod geometry;
pub mod mpcc;
pub mod planner;
pub mod rng;
pub mod sac;
pub mod sim;
pub mod world;

pub use error::{Error, Result};
pub use geometry::{PlanarCurve, Vec2};
