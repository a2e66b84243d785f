use std::path::PathBuf;

/// Crate-wide error type.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    /// A pose/transform estimation could not produce a result (too few or
    /// degenerate correspondences). The pipeline maps this to a
    /// predict-only frame rather than aborting.
    #[error("estimation failed: {0}")]
    EstimationFailed(String),

    #[error("insufficient data: {0}")]
    InsufficientData(String),

    #[error("out of bounds: {0}")]
    OutOfBounds(String),

    #[error("alignment failed: {0}")]
    AlignmentFailed(String),

    #[error("config error: {0}")]
    Config(String),

    #[error("{path}:{line}: {msg}")]
    Parse {
        path: PathBuf,
        line: usize,
        msg: String,
    },

    #[error("unsupported format: {0}")]
    Format(String),

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

impl Error {
    pub fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
