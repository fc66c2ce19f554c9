use std::path::PathBuf;

use thiserror::Error;

/// Errors produced by the library.
///
/// `InvalidConfig` signals a caller mistake (bad parameter values); every other
/// variant is a data problem (unreadable, malformed or inconsistent input).
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}:{line}: {msg}")]
    Parse {
        path: PathBuf,
        line: usize,
        msg: String,
    },

    #[error("{path}: {source}")]
    Json {
        path: PathBuf,
        #[source]
        source: serde_json::Error,
    },

    #[error("{path}: {source}")]
    Image {
        path: PathBuf,
        #[source]
        source: image::ImageError,
    },

    #[error("{context}: unknown category id {id}")]
    UnknownCategory { context: String, id: u32 },

    #[error("annotation {annotation_id} references missing image id {image_id}")]
    MissingImage { annotation_id: u64, image_id: u64 },

    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    #[error("object center ({x}, {y}) lies outside the {width}x{height} image")]
    CenterOutsideImage {
        x: f64,
        y: f64,
        width: f64,
        height: f64,
    },

    #[error("ground truth set is empty")]
    EmptyGroundTruth,

    #[error("scene generation failed: {0}")]
    Infeasible(String),

    #[error("{0}")]
    Data(String),
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub fn json(path: impl Into<PathBuf>, source: serde_json::Error) -> Self {
        Error::Json {
            path: path.into(),
            source,
        }
    }

    /// True when the error stems from caller-supplied parameters rather than data.
    pub fn is_usage(&self) -> bool {
        matches!(self, Error::InvalidConfig(_))
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
