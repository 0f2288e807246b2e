use std::path::PathBuf;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("requested {requested} modes but only {available} are available")]
    SpectrumExhausted { requested: usize, available: usize },

    #[error("need at least {needed} eigenvalues, got {got}")]
    InsufficientEigenvalues { needed: usize, got: usize },

    #[error("eigensolver did not converge: max residual {max_residual:e} (tolerance {tolerance:e})")]
    NoConvergence { max_residual: f64, tolerance: f64, residuals: Vec<f64> },

    #[error("forward cache is stale (cache version {cache}, model version {model})")]
    StaleCache { cache: u64, model: u64 },

    #[error("training diverged at epoch {epoch}: loss = {loss}")]
    Diverged { epoch: usize, loss: f64 },

    #[error("{path}:{line}: malformed OFF header: {msg}")]
    OffHeader { path: PathBuf, line: usize, msg: String },

    #[error("{path}:{line}: vertex count mismatch: header declares {expected}, found {found}")]
    OffCountMismatch { path: PathBuf, line: usize, expected: usize, found: usize },

    #[error("{path}:{line}: non-numeric coordinate `{token}`")]
    OffNonNumeric { path: PathBuf, line: usize, token: String },

    #[error("config error at `{field}`: {msg}")]
    Config { field: String, msg: String },

    #[error("parse error: {0}")]
    Parse(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }

    pub(crate) fn config(field: impl Into<String>, msg: impl Into<String>) -> Self {
        Error::Config { field: field.into(), msg: msg.into() }
    }
}
