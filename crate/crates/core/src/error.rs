use std::path::PathBuf;

/// Errors produced by the segmentation engine.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    Argument(String),

    #[error("malformed file format: {0}")]
    Format(String),

    #[error("unsupported: {0}")]
    Unsupported(String),

    #[error("expected a 3D image but header declares {0} dimensions")]
    Dimensionality(i16),

    #[error("label value {0} has no entry in the label map")]
    Mapping(u32),

    #[error("contract violation: {0}")]
    Contract(String),

    #[error("nothing to sample: {0}")]
    NoSample(String),

    #[error("invalid state: {0}")]
    State(String),

    #[error("predictor failed: {0}")]
    Predictor(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

impl Error {
    pub(crate) fn arg(msg: impl Into<String>) -> Self {
        Error::Argument(msg.into())
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
