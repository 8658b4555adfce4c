use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("degenerate 6D rotation: {0}")]
    DegenerateRotation(&'static str),
    #[error("shape vector has {got} coefficients, model expects {expected}")]
    ShapeDimMismatch { expected: usize, got: usize },
    #[error("body rotation count {got} does not match model ({expected})")]
    PoseDimMismatch { expected: usize, got: usize },
    #[error("keypoint arrays disagree in length ({0} vs {1})")]
    KeypointDimMismatch(usize, usize),
    #[error("texture maps have different atlas sizes ({0} vs {1})")]
    AtlasMismatch(usize, usize),
    #[error("meshes have different vertex counts ({0} vs {1})")]
    VertexCountMismatch(usize, usize),
    #[error("prior dimensions do not match model: {0}")]
    PriorDimMismatch(&'static str),
    #[error("transform is not rigid (orthonormality error {0:.3e})")]
    NotRigid(f64),
    #[error("invalid camera: {0}")]
    InvalidCamera(&'static str),
    #[error("dimension mismatch: {0}")]
    DimMismatch(String),
    #[error("degenerate joint configuration: {0}")]
    DegenerateConfiguration(&'static str),
    #[error("malformed model file: field `{field}`: {reason}")]
    MalformedModelFile { field: String, reason: String },
    #[error("malformed scene: {0}")]
    MalformedScene(String),
    #[error("malformed results: {0}")]
    MalformedResults(String),
    #[error("configuration out of range: {0}")]
    ConfigOutOfRange(String),
    #[error("empty batch")]
    EmptyBatch,
    #[error("non-finite loss at iteration {iteration}")]
    NonFiniteLoss { iteration: usize },
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("json error in {path}: {source}")]
    Json {
        path: PathBuf,
        #[source]
        source: serde_json::Error,
    },
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn json(path: impl Into<PathBuf>, source: serde_json::Error) -> Self {
        Error::Json {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn malformed_model(field: impl Into<String>, reason: impl Into<String>) -> Self {
        Error::MalformedModelFile {
            field: field.into(),
            reason: reason.into(),
        }
    }
}
