use std::fmt;
use std::path::PathBuf;

use c3v_director::DirectorError;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub type Result<T, E = PipelineError> = std::result::Result<T, E>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Stage {
    Validate,
    Plan,
    Lift,
    Refine,
    Render,
}

impl Stage {
    pub const ALL: [Stage; 4] = [Stage::Plan, Stage::Lift, Stage::Refine, Stage::Render];

    pub fn as_str(self) -> &'static str {
        match self {
            Stage::Validate => "validate",
            Stage::Plan => "plan",
            Stage::Lift => "lift",
            Stage::Refine => "refine",
            Stage::Render => "render",
        }
    }
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("configuration: {0}")]
    Config(String),

    #[error("missing input {path}: run the {needs} stage first")]
    MissingInput { path: PathBuf, needs: Stage },

    #[error(transparent)]
    Director(#[from] DirectorError),

    #[error("no depth for trajectory point {index}")]
    DepthMissing { index: usize },

    #[error("no motion clip matches {0:?}")]
    MotionNotFound(String),

    #[error("unknown object id {0:?}")]
    UnknownObject(String),

    #[error(transparent)]
    Core(#[from] c3v_core::Error),

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("cannot parse {path}: {detail}")]
    Parse { path: PathBuf, detail: String },
}

impl PipelineError {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        PipelineError::Io {
            path: path.into(),
            source,
        }
    }

    pub fn parse(path: impl Into<PathBuf>, detail: impl fmt::Display) -> Self {
        PipelineError::Parse {
            path: path.into(),
            detail: detail.to_string(),
        }
    }
}

/// Coarse failure class; the command line maps these to exit codes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FailureKind {
    Config,
    Director,
    Validation,
    DepthMissing,
    Diverged,
    Render,
}

/// A pipeline error tagged with where it happened.
#[derive(Debug, Error)]
#[error("{stage} stage failed{}: {source}", .object.as_ref().map(|o| format!(" for object {o:?}")).unwrap_or_default())]
pub struct StageFailure {
    pub stage: Stage,
    pub object: Option<String>,
    #[source]
    pub source: PipelineError,
}

impl StageFailure {
    pub fn new(stage: Stage, object: Option<&str>, source: impl Into<PipelineError>) -> Self {
        Self {
            stage,
            object: object.map(str::to_string),
            source: source.into(),
        }
    }

    pub fn kind(&self) -> FailureKind {
        use c3v_core::Error as C;
        match &self.source {
            PipelineError::Config(_)
            | PipelineError::MissingInput { .. }
            | PipelineError::UnknownObject(_)
            | PipelineError::MotionNotFound(_)
            | PipelineError::Parse { .. } => FailureKind::Config,
            PipelineError::Director(DirectorError::Config(_)) => FailureKind::Config,
            PipelineError::Director(e) if e.is_validation() => FailureKind::Validation,
            PipelineError::Director(_) => FailureKind::Director,
            PipelineError::DepthMissing { .. } | PipelineError::Core(C::DepthMissing { .. } | C::DepthMissingAt { .. }) => {
                FailureKind::DepthMissing
            }
            PipelineError::Core(C::RefinementDiverged(_)) => FailureKind::Diverged,
            _ if self.stage == Stage::Render => FailureKind::Render,
            PipelineError::Io { .. } => FailureKind::Config,
            PipelineError::Core(_) => match self.stage {
                Stage::Refine => FailureKind::Diverged,
                Stage::Plan => FailureKind::Director,
                _ => FailureKind::Config,
            },
        }
    }
}

pub trait StageContext<T> {
    fn at(self, stage: Stage, object: Option<&str>) -> Result<T, StageFailure>;
}

impl<T, E: Into<PipelineError>> StageContext<T> for std::result::Result<T, E> {
    fn at(self, stage: Stage, object: Option<&str>) -> Result<T, StageFailure> {
        self.map_err(|e| StageFailure::new(stage, object, e))
    }
}
