use thiserror::Error;

/// Errors raised anywhere in the pipeline.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid dimension: {0}")]
    InvalidDimension(String),

    #[error("contract violation: {0}")]
    ContractViolation(String),

    #[error("numeric failure in {context}: {detail}")]
    NumericFailure { context: String, detail: String },

    #[error("degenerate graph: node {node} has zero degree")]
    DegenerateGraph { node: usize },

    #[error("eigensolver did not converge after {sweeps} sweeps (off-diagonal {off:e})")]
    NotConverged { sweeps: usize, off: f64 },

    #[error("ill-conditioned channel gram matrix (condition number {cond:e})")]
    IllConditioned { cond: f64 },

    #[error("resource limit: {0}")]
    Resource(String),

    #[error("invalid state: {0}")]
    State(String),

    #[error("config error at `{key}`: {msg}")]
    Config { key: String, msg: String },

    #[error("format error: {0}")]
    Format(String),

    #[error("unsupported version {found} (supported: {supported})")]
    UnsupportedVersion { found: u32, supported: u32 },

    #[error("artifact mismatch: {0}")]
    ArtifactMismatch(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn numeric(context: impl Into<String>, detail: impl Into<String>) -> Self {
        Error::NumericFailure {
            context: context.into(),
            detail: detail.into(),
        }
    }

    pub(crate) fn config(key: impl Into<String>, msg: impl Into<String>) -> Self {
        Error::Config {
            key: key.into(),
            msg: msg.into(),
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
