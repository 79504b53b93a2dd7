use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("frame dimensions {height}x{width} are not divisible by 8")]
    Dimension { height: usize, width: usize },

    #[error("unsupported channel count {0}, expected 1 or 3")]
    Channels(usize),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("non-finite value in {0}")]
    NonFinite(String),

    #[error("dataset error: {0}")]
    Dataset(String),

    #[error("metric error: {0}")]
    Metric(String),

    #[error("layer {0} is outside the probeable range 17..=24")]
    LayerRange(usize),

    #[error("checkpoint error: {0}")]
    Checkpoint(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// True for errors caused by bad user input rather than a failed computation.
    pub fn is_validation(&self) -> bool {
        matches!(
            self,
            Error::Dimension { .. }
                | Error::Channels(_)
                | Error::Config(_)
                | Error::LayerRange(_)
                | Error::Dataset(_)
        )
    }
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn shape_err<T>(msg: impl Into<String>) -> Result<T> {
    Err(Error::Shape(msg.into()))
}
