//! Error type shared across the crate.

use thiserror::Error;

use crate::dataset::LabelKind;

/// Errors produced by model evaluation, solvers, and the experiment harness.
#[derive(Debug, Clone, Error)]
pub enum AdroError {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("label {label} is not valid for {kind:?} labels")]
    LabelMismatch { label: f64, kind: LabelKind },

    #[error("margin {margin} exceeds the exponent cap {cap} for the Poisson loss")]
    MarginOverflow { margin: f64, cap: f64 },

    #[error("degenerate parameter: beta must be nonzero")]
    DegenerateParameter,

    #[error(
        "inner problem unbounded: lambda {lambda} is at or below the concavity threshold {threshold}"
    )]
    UnboundedInnerProblem { lambda: f64, threshold: f64 },

    #[error("configuration error: {0}")]
    Config(String),

    #[error("solver diverged: {0}")]
    SolverDiverged(String),

    #[error("curvature matrix is ill-conditioned (condition number {cond:.3e})")]
    IllConditionedCurvature { cond: f64 },

    #[error("Newton iteration failed after {iterations} steps (residual {residual:.3e})")]
    NewtonFailed {
        iterations: usize,
        residual: f64,
        /// Last iterate reached before the failure.
        last_iterate: Vec<f64>,
    },

    #[error("bisection bracket failure: {0}")]
    BracketFailure(String),

    #[error("evaluation error: {0}")]
    Evaluation(String),

    #[error("insufficient data: {0}")]
    InsufficientData(String),
}

pub type Result<T> = std::result::Result<T, AdroError>;
