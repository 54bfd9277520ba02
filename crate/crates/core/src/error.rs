use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    /// A config key failed to parse or has the wrong type.
    #[error("config key `{key}`: {msg}")]
    Config { key: String, msg: String },

    /// One or more scenario invariants are violated.
    #[error("invalid configuration: {}", .0.join("; "))]
    Invalid(Vec<String>),

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    /// The interference-plus-noise covariance of a user could not be factorized.
    #[error("interference-plus-noise covariance is numerically singular for user ({l},{k}) in subband {i}")]
    Singular { l: usize, k: usize, i: usize },

    #[error("empty feasible set: {0}")]
    EmptyFeasibleSet(String),

    #[error("unknown {what} `{value}`")]
    Unknown { what: &'static str, value: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn config(key: impl Into<String>, msg: impl Into<String>) -> Self {
        Error::Config {
            key: key.into(),
            msg: msg.into(),
        }
    }
}
