use thiserror::Error;

/// Errors raised by the library. The CLI maps each variant onto an exit code
/// through [`Error::exit_code`].
#[derive(Debug, Error)]
pub enum Error {
    /// Malformed or inconsistent input. `path` names the offending location
    /// (a JSON path for environment files, a parameter name otherwise).
    #[error("invalid input at {path}: {msg}")]
    Input { path: String, msg: String },

    #[error("dimension mismatch: expected {expected}, got {got}")]
    Dimension { expected: usize, got: usize },

    #[error("domain error: {0}")]
    Domain(String),

    #[error("degenerate input: {0}")]
    Degenerate(String),

    #[error("not applicable: {0}")]
    NotApplicable(String),

    #[error("enumeration of {needed} sequences exceeds budget {budget}; use the importance-sampling estimator")]
    BudgetExceeded { needed: u128, budget: u64 },

    #[error("population count {0} exceeds 2^53")]
    Saturation(u64),

    #[error("power iteration did not converge in {iterations} iterations (residual {residual:e})")]
    NonConvergence { iterations: usize, residual: f64 },

    #[error("corrupted spectral solution: {0}")]
    CorruptedSolution(String),

    #[error("grid too coarse: normalization defect {defect:e} exceeds {limit:e}")]
    DiscretizationTooCoarse { defect: f64, limit: f64 },

    #[error("window {window} exceeds the {available} available rows")]
    WindowTooLarge { window: usize, available: usize },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn input(path: impl Into<String>, msg: impl Into<String>) -> Self {
        Error::Input {
            path: path.into(),
            msg: msg.into(),
        }
    }

    /// 1 validation, 2 numerical failure, 3 budget exceeded.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Input { .. } | Error::Dimension { .. } | Error::Io(_) | Error::Json(_) => 1,
            Error::BudgetExceeded { .. } => 3,
            _ => 2,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
