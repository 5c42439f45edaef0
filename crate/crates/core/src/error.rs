use thiserror::Error;

/// Errors raised by the solver library.
#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    Dimension { expected: usize, got: usize },

    #[error("index {index} out of range for universe of size {size}")]
    Index { index: usize, size: usize },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("unsupported oracle: {0}")]
    UnsupportedOracle(String),

    #[error("constant estimation failed: {0}")]
    Estimation(String),

    #[error("oracle contract violated: {0}")]
    OracleContract(String),

    #[error("precondition failed: {0}")]
    Precondition(String),

    #[error("run diverged at iteration {iteration}: feasibility norm {feasibility:e} exceeds {limit:e}")]
    Diverged {
        iteration: usize,
        feasibility: f64,
        limit: f64,
    },

    #[error("reference solve exhausted its budget (best value {best_value}, feasibility {feasibility:e})")]
    Budget { best_value: f64, feasibility: f64 },

    #[error("reference solver disagrees with grid search: {0}")]
    CrossCheck(String),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn check_dim(expected: usize, got: usize) -> Result<()> {
    if expected == got {
        Ok(())
    } else {
        Err(Error::Dimension { expected, got })
    }
}
