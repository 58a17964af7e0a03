use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid gaussian: {0}")]
    InvalidGaussian(String),

    #[error("invalid transform: {0}")]
    InvalidTransform(String),

    #[error("invalid camera: {0}")]
    InvalidCamera(String),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("point is behind the camera (camera-space z = {z})")]
    BehindCamera { z: f64 },

    #[error("no valid depth near anchor pixel ({x:.2}, {y:.2})")]
    DepthMissing { x: f64, y: f64 },

    #[error("no valid depth for trajectory point {index}")]
    DepthMissingAt { index: usize },

    #[error("non-finite render while perturbing {param}")]
    GradientInvalid { param: String },

    #[error("refinement diverged: {0}")]
    RefinementDiverged(String),

    #[error("every step of the path is degenerate; no heading can be computed")]
    RotationDegenerate,

    #[error("index {index} out of range (len {len})")]
    IndexOutOfRange { index: usize, len: usize },

    #[error("refinement stage ordering violated: {0}")]
    StageOrder(String),

    #[error("score provider failed: {0}")]
    Provider(String),

    #[error("malformed PLY: {0}")]
    Ply(String),

    #[error("image codec error: {0}")]
    Image(String),

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
