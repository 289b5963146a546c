use thiserror::Error;

/// Errors surfaced by model construction, solvers, and data loading.
///
/// Variants are split so callers can distinguish "the inputs were malformed"
/// (`InvalidShape`, `InvalidArgument`, `DataFormat`) from "the computation ran
/// but could not certify its result" (`NotConverged`, `DegenerateData`,
/// `PsiBudgetExceeded`).
#[derive(Debug, Error)]
pub enum GicError {
    /// Dimension or variant mismatch between a parameter, regularizer, or subspace.
    #[error("shape mismatch: {0}")]
    InvalidShape(String),

    /// A caller-supplied scalar or option was outside its documented domain.
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    /// Iterative solver stopped at `max_iter` without certifying optimality.
    #[error("solver stopped after {iterations} iterations with KKT residual {residual:.3e}")]
    NotConverged { iterations: usize, residual: f64 },

    /// Input data cannot support the requested operation (e.g. zero design matrix).
    #[error("degenerate data: {0}")]
    DegenerateData(String),

    /// A candidate model's squared compatibility constant exceeds the allowed budget.
    #[error("model complexity psi_sq = {psi_sq} exceeds budget {budget}")]
    PsiBudgetExceeded { psi_sq: f64, budget: f64 },

    /// Malformed file contents (CSV/JSON), with the offending path for context.
    #[error("{path}: {message}")]
    DataFormat { path: String, message: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, GicError>;
