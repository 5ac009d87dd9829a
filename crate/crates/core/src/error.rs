use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    /// A caller broke an operation's preconditions (shapes, ranks, indices).
    #[error("contract violation: {0}")]
    Contract(String),

    #[error("numerical failure on a {rows}x{cols} matrix: {reason}")]
    Numerical { rows: usize, cols: usize, reason: String },

    /// Stacked singular values tie across a shared/unshared boundary.
    #[error("ambiguous vector order: positions {first} and {second} tie at {value}")]
    Ambiguous { first: usize, second: usize, value: f64 },

    #[error("parse error at row {row}, column {col}: {reason}")]
    Parse { row: usize, col: usize, reason: String },

    #[error("configuration error: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn contract(msg: impl Into<String>) -> Self {
        Error::Contract(msg.into())
    }

    /// Whether this error stems from a failed numerical routine rather than bad input.
    pub fn is_numerical(&self) -> bool {
        matches!(self, Error::Numerical { .. })
    }
}
