use thiserror::Error;

/// Broad failure category, used by front ends to pick an exit status.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorKind {
    /// Malformed input: bad shapes, bad files, bad parameters.
    Parse,
    /// A search or balancing problem has no feasible answer.
    Infeasible,
    /// Non-finite or otherwise unrepresentable numbers.
    Numeric,
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch in {op}: {detail}")]
    Dimension { op: &'static str, detail: String },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("non-finite value {0}")]
    NonFinite(f64),

    #[error("no feasible configuration: {0}")]
    Infeasible(String),

    #[error("empty input: {0}")]
    Empty(&'static str),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub fn kind(&self) -> ErrorKind {
        match self {
            Error::NonFinite(_) => ErrorKind::Numeric,
            Error::Infeasible(_) => ErrorKind::Infeasible,
            _ => ErrorKind::Parse,
        }
    }

    pub(crate) fn dim(op: &'static str, detail: impl Into<String>) -> Self {
        Error::Dimension { op, detail: detail.into() }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
