use std::path::PathBuf;

use crate::tensor::Dims;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("shape mismatch in {op}: {lhs:?} vs {rhs:?}")]
    Shape {
        op: &'static str,
        lhs: Dims,
        rhs: Dims,
    },

    #[error("invalid tensor: {0}")]
    InvalidTensor(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("resolution {height}x{width} is not divisible by {factor}")]
    Resolution {
        height: usize,
        width: usize,
        factor: usize,
    },

    #[error("node {node} is not on this tape")]
    NotOnTape { node: usize },

    #[error("format error at byte {offset}: {message}")]
    Format { offset: usize, message: String },

    #[error("unsupported variant: {0}")]
    Unsupported(String),

    #[error("parse error: {0}")]
    Parse(String),

    #[error("checkpoint mismatch for `{path}`: model expects {expected:?}, checkpoint has {found:?}")]
    CheckpointMismatch {
        path: String,
        expected: Option<Dims>,
        found: Option<Dims>,
    },

    #[error("non-finite loss at epoch {epoch}, step {step}: {loss}")]
    NonFiniteLoss { epoch: usize, step: usize, loss: f64 },

    #[error("ground truth is empty")]
    EmptyGroundTruth,

    #[error("class id {0} is outside 0..=42")]
    ClassOutOfRange(i64),

    #[error("detector failed on image `{image_id}`: {message}")]
    Detector { image_id: String, message: String },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("image codec: {0}")]
    Image(#[from] image::ImageError),

    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
