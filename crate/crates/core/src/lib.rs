//! Energy-efficient, collision-free robot motions computed as geodesics on the
//! configuration-space manifold.
//!
//! The kinetic-energy metric `M(q)` of a serial chain is reshaped around no-go
//! regions (joint limits, joint-space regions, obstacles and self-collisions)
//! by additive barrier-based metric terms. Geodesics between two
//! configurations are approximated by natural cubic splines whose control
//! points minimize the discretized Riemannian energy.
//!
//! Module map:
//! - [`manifold`]: metric fields, inner products, Christoffel symbols,
//!   geodesic accelerations, IVP integration, curve energy and length.
//! - [`kinematics`]: serial chains, forward kinematics, point Jacobians,
//!   mass matrix, damped pseudo-inverse.
//! - [`barriers`]: exponential, logarithmic and inverse-power barriers.
//! - [`geometry`]: signed distances and closest points for spheres,
//!   capsules and boxes; chain/region and self-collision queries.
//! - [`avoidance`]: region-avoiding metric terms and the summed
//!   collision-free metric.
//! - [`solver`]: spline geodesics, energy minimization, sequences.
//! - [`runner`]: scenarios, goal IK, experiment execution and export.

pub mod avoidance;
pub mod barriers;
pub mod error;
pub mod geometry;
pub mod kinematics;
pub mod manifold;
pub mod runner;
pub mod solver;

pub use error::{Error, Result};

/// Joint-space vector type used throughout the crate.
pub type JointVector = nalgebra::DVector<f64>;
/// Joint-space square matrix type used throughout the crate.
pub type JointMatrix = nalgebra::DMatrix<f64>;
