use thiserror::Error;

/// Errors raised anywhere in the scheduling stack.
#[derive(Debug, Error)]
pub enum Error {
    #[error("parse error at line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error("invalid instance: {0}")]
    InvalidInstance(String),
    #[error("configuration error: {0}")]
    Config(String),
    #[error("infeasible action: {0}")]
    Infeasible(String),
    #[error("state is terminal")]
    Terminal,
    #[error("state is not terminal ({remaining} operations unscheduled)")]
    NotTerminal { remaining: usize },
    #[error("instance too large for exhaustive search: {ops} operations (limit {limit})")]
    TooLarge { ops: usize, limit: usize },
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("contract violation: {0}")]
    Contract(String),
    #[error("training error: {0}")]
    Training(String),
    #[error("checkpoint error: {0}")]
    Checkpoint(String),
    #[error("cache error: {0}")]
    Cache(String),
    #[error("schedule invariant violated: {0}")]
    Invariant(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn parse(line: usize, msg: impl Into<String>) -> Self {
        Error::Parse {
            line,
            msg: msg.into(),
        }
    }

    /// Process exit code used by the command-line front end.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Parse { .. } | Error::Json(_) | Error::Csv(_) => 2,
            Error::Infeasible(_)
            | Error::Terminal
            | Error::NotTerminal { .. }
            | Error::Invariant(_)
            | Error::Contract(_) => 3,
            Error::Config(_) | Error::InvalidInstance(_) | Error::TooLarge { .. } => 4,
            _ => 1,
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
