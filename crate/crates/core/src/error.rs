use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ModelError {
    #[error("{name} out of domain: {value}")]
    Domain { name: &'static str, value: f64 },
    #[error("unknown name `{0}`")]
    UnknownName(String),
    #[error("inconsistent parameters: {0}")]
    Inconsistent(String),
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SolverError {
    #[error("no start converged ({starts} starts, best residual {best_residual:.3e})")]
    NoConvergence { starts: usize, best_residual: f64 },
    #[error("stability verdict identical at both bracket ends ({0})")]
    NoBracket(String),
    #[error("branch lost at grid index {index} (value {value:e})")]
    BranchLost { index: usize, value: f64 },
    #[error("trajectory diverged at t = {time:e} s")]
    Diverged { time: f64 },
    #[error("numeric failure: {0}")]
    Numeric(String),
    #[error("invalid input: {0}")]
    InvalidInput(String),
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum FluctuationError {
    #[error("linearization requested at a point that is not stable")]
    UnstablePoint,
    #[error("dynamical matrix is numerically singular")]
    SingularResponse,
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SensitivityError {
    #[error("re-solved state jumped branch (relative jump {jump:.3e})")]
    BranchJump { jump: f64 },
    #[error("finite-difference gradient did not settle after {halvings} halvings")]
    GradientUnsettled { halvings: usize },
    #[error("covariance singular even after regularization")]
    SingularCovariance,
    #[error("Fisher information is zero")]
    ZeroInformation,
    #[error(transparent)]
    Solver(#[from] SolverError),
    #[error(transparent)]
    Fluctuation(#[from] FluctuationError),
}

/// Failure of the single-point pipeline, tagged with the stage that raised it.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum EvalError {
    #[error("validation: {0}")]
    Validation(#[from] ModelError),
    #[error("steady state: {0}")]
    SteadyState(#[from] SolverError),
    #[error("transfer: {0}")]
    Transfer(#[from] FluctuationError),
    #[error("gradient: {0}")]
    Gradient(SensitivityError),
    #[error("fisher: {0}")]
    Fisher(SensitivityError),
}

impl EvalError {
    pub fn stage(&self) -> &'static str {
        match self {
            EvalError::Validation(_) => "validation",
            EvalError::SteadyState(_) => "steady-state",
            EvalError::Transfer(_) => "transfer",
            EvalError::Gradient(_) => "gradient",
            EvalError::Fisher(_) => "fisher",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum OptimizerError {
    #[error("kernel matrix ill-conditioned even with jitter {0:e}")]
    IllConditioned(f64),
    #[error("no feasible point found in {0} evaluations")]
    AllInfeasible(usize),
    #[error("invalid search space: {0}")]
    InvalidSpace(String),
    #[error("invalid axis: {0}")]
    InvalidAxis(String),
}
