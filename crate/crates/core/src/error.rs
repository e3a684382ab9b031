use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("specification error: {0}")]
    Specification(String),

    #[error("degenerate input: {0}")]
    DegenerateInput(String),

    #[error("numeric error{}: {message}", step.map(|s| format!(" at step {s}")).unwrap_or_default())]
    Numeric { step: Option<usize>, message: String },

    #[error("undefined conditioning cell: {0}")]
    UndefinedCell(String),

    #[error("undefined AUC: {0}")]
    UndefinedAuc(String),

    #[error(
        "starter pool exhausted: accepted {accepted} of {required} after {attempted} traversals \
         (acceptance rate {acceptance_rate:.4})"
    )]
    InsufficientStarters {
        accepted: usize,
        required: usize,
        attempted: usize,
        acceptance_rate: f64,
    },

    #[error("integrity error: {0}")]
    Integrity(String),

    #[error("config error: {0}")]
    Config(String),

    #[error("missing dependency for stage `{stage}`: {detail}")]
    MissingDependency { stage: String, detail: String },

    #[error("schema error at line {line}: {message}")]
    Schema { line: usize, message: String },

    #[error("checkpoint error: {0}")]
    Checkpoint(String),

    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }

    pub(crate) fn numeric(step: Option<usize>, msg: impl Into<String>) -> Self {
        Error::Numeric {
            step,
            message: msg.into(),
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// Process exit code used by the command-line front end.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config(_) | Error::InvalidArgument(_) | Error::Specification(_) => 2,
            Error::MissingDependency { .. } => 3,
            Error::Integrity(_) | Error::Checkpoint(_) | Error::Schema { .. } => 4,
            _ => 1,
        }
    }
}
