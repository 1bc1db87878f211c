use thiserror::Error;

/// Crate-wide error type.
#[derive(Debug, Error)]
pub enum Error {
    /// Parameter or invariant violation detected before any computation.
    #[error("validation error: {0}")]
    Validation(String),

    /// Request outside the supported domain (e.g. non-transversal direction).
    #[error("domain error: {0}")]
    Domain(String),

    /// Iterative minimization hit its iteration cap.
    #[error("iteration limit reached after {iterations} iterations (residual {residual:.3e})")]
    IterationLimit {
        iterations: usize,
        residual: f64,
        /// Last iterate, so callers can inspect or restart.
        last: Box<crate::cylinder::CylinderField>,
    },

    /// Linear (CG) solver failure; carries the residual-norm history tail.
    #[error("linear solver failed: {reason} (last residuals {history:?})")]
    Solver { reason: String, history: Vec<f64> },

    /// NaN/Inf or other floating-point breakdown.
    #[error("numerical error: {0}")]
    Numerical(String),

    /// Time-step restriction violated.
    #[error("stability error: {0}")]
    Stability(String),

    /// Zero-crossing extraction failed in one column.
    #[error("front extraction failed in column {column}: {reason}")]
    FrontExtraction { column: usize, reason: String },

    /// Inconsistent effective-coefficient inputs (solvability check).
    #[error("consistency error: {0}")]
    Consistency(String),

    /// Feature deliberately not supported (e.g. irrational directions).
    #[error("unsupported: {0}")]
    Unsupported(String),

    /// Configuration file / CLI problems.
    #[error("config error: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),

    #[error("serialization error: {0}")]
    Serialize(#[from] serde_json::Error),
}
