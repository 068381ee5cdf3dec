//! Convergence experiments: configuration, refinement strategies, sweeps and their output.

pub mod config;
pub mod plot;
pub mod refine;
pub mod sweep;

pub use config::Config;
pub use refine::{FitSetup, Fitted, Refiner, Strategy};
pub use sweep::{converge, run_replicate, SweepResult, SweepRow};
