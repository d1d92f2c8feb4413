use std::path::PathBuf;

/// Errors produced by the stereo pipeline.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("malformed image file: {0}")]
    Format(String),
    #[error("invalid image dimensions: {0}")]
    Dimension(String),
    #[error("patch dimensions differ: {left:?} vs {right:?}")]
    DimensionMismatch {
        left: (usize, usize),
        right: (usize, usize),
    },
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("value out of range: {0}")]
    Range(String),
    #[error("invalid sweep specification: {0}")]
    Spec(String),
    #[error("disparity {0} is not positive")]
    NonPositiveDisparity(f64),
    #[error("degenerate peak system (no usable curvature around the correlation peak)")]
    DegenerateSystem,
    #[error("sub-pixel estimate {0} exceeds the refinement bound")]
    OutOfRange(f64),
    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
