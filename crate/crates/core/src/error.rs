use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("numerical failure on path {path}: {message}")]
    NumericalFailure { path: usize, message: String },

    #[error("Picard iteration did not converge at node {node} (last increment {increment:e})")]
    SolverFailure { node: usize, increment: f64 },

    #[error("regression failed at node {node}: {message}")]
    RegressionFailure { node: usize, message: String },

    #[error("rejected input: {0}")]
    RejectedInput(String),

    #[error("no saddle pair on the action grids at t={t}: {message}")]
    NoSaddle { t: f64, message: String },

    #[error("Isaacs condition fails on the pilot sample (max gap {max_gap:e} > tolerance {tolerance:e})")]
    IsaacsFailure {
        max_gap: f64,
        tolerance: f64,
        report: Box<crate::games::IsaacsReport>,
    },

    #[error("config error at `{path}`: {message}")]
    Config { path: String, message: String },

    #[error("malformed file: {0}")]
    Format(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }
}
