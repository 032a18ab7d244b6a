use thiserror::Error;

/// Crate-wide error type. Variants map onto the CLI exit-code classes:
/// argument/validation problems, IO problems, and numeric failures.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    Argument(String),

    #[error("numeric failure in `{op}`: {msg}")]
    Numeric { op: String, msg: String },

    #[error("estimation failed: {0}")]
    Estimation(String),

    #[error("metric undefined: {0}")]
    Metric(String),

    #[error("enumeration too large: {0}")]
    Size(String),

    #[error("parse error: {0}")]
    Parse(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub fn arg(msg: impl Into<String>) -> Self {
        Error::Argument(msg.into())
    }

    pub fn numeric(op: impl Into<String>, msg: impl Into<String>) -> Self {
        Error::Numeric {
            op: op.into(),
            msg: msg.into(),
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
