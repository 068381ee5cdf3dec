//! Constrained optimal smoothing on piecewise-linear knot spaces.
//!
//! The crate computes the maximum a posteriori estimate of a Gaussian
//! process observed with noise and restricted to a convex shape set
//! (bounds, monotonicity), using hat-function approximations on knot
//! grids, and evaluates the quantities that drive its convergence
//! bounds.

pub mod constraints;
pub mod diagnostics;
pub mod error;
pub mod experiments;
pub mod grid;
pub mod kernels;
pub mod qp;
pub mod rkhs;
pub mod sampler;
pub mod smoother;

pub use constraints::{ConstraintSet, LinearInequalities, Monotone};
pub use diagnostics::{BoundReport, Reference};
pub use error::{Error, Result};
pub use grid::{DomainF, KnotGrid, Neighbors, PiecewiseLinear};
pub use kernels::{Gram, HolderParams, Kernel, KernelFamily};
pub use qp::{HessianFactor, Inequalities, QpOptions, QpProblem, QpSolution};
pub use rkhs::{KernelInterpolant, RkhsContext};
pub use sampler::{Replicate, ReplicateSpec};
pub use smoother::{fit_map, MapSolution, Observations, SmoothingProblem};
