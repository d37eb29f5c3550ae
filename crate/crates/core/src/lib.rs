//! Quantum-noise-limited sensitivity model for chi(2) doubly-resonant ring
//! gyroscopes, with steady-state, fluctuation, Fisher-information and
//! Bayesian-optimization layers.

#![allow(clippy::neg_cmp_op_on_partial_ord)] // `!(x > 0.0)` deliberately rejects NaN.

pub mod error;
pub mod fluctuations;
pub mod model;
pub mod optimizer;
pub mod sensitivity;
pub mod steady;

pub use error::{EvalError, FluctuationError, ModelError, OptimizerError, SensitivityError, SolverError};
pub use model::{InjectionScheme, ModelParams, ParamKey, RotationRate, DEG_PER_HOUR};
pub use sensitivity::{evaluate_point, EvalOptions, Evaluation, MeanConvention, SensitivityReport};
pub use steady::{SolverStrategy, Stability, SteadyState};
