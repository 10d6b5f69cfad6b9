use thiserror::Error;

/// Errors produced anywhere in the simulate → digitize → extract → analyze chain.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid configuration: {0}")]
    Config(String),

    /// The input carries no fluctuation at all (constant trace, constant bit sequence).
    #[error("zero variance: {0}")]
    ZeroVariance(String),

    #[error("insufficient data for {what}: need at least {needed}, got {got}")]
    InsufficientData {
        what: String,
        needed: usize,
        got: usize,
    },

    #[error("empty distribution")]
    EmptyDistribution,

    #[error("malformed {what}: {detail}")]
    Format { what: String, detail: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn config(msg: impl Into<String>) -> Self {
        Error::Config(msg.into())
    }

    pub(crate) fn format(what: impl Into<String>, detail: impl ToString) -> Self {
        Error::Format {
            what: what.into(),
            detail: detail.to_string(),
        }
    }

    pub(crate) fn insufficient(what: impl Into<String>, needed: usize, got: usize) -> Self {
        Error::InsufficientData {
            what: what.into(),
            needed,
            got,
        }
    }

    /// True for failures that indicate degenerate or too-short input rather than
    /// misconfiguration or I/O trouble.
    pub fn is_guard_failure(&self) -> bool {
        matches!(
            self,
            Error::ZeroVariance(_) | Error::InsufficientData { .. } | Error::EmptyDistribution
        )
    }
}

pub type Result<T> = std::result::Result<T, Error>;
