//! Gaussian-process Bayesian optimization and parameter sweeps.

pub mod acquisition;
pub mod bayes;
pub mod gp;
pub mod lhs;
pub mod sweep;

pub use acquisition::expected_improvement;
pub use bayes::{
    bayes_minimize, optimize_design, BayesConfig, DesignResult, Dimension, OptimizationTrace, SearchSpace, TraceEntry,
};
pub use gp::{gp_posterior, Gp, GpHyper};
pub use sweep::{sweep_grid, Axis, AxisScale, CellSummary, SweepCell, SweepGrid};
