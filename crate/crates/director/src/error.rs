use std::path::PathBuf;

use thiserror::Error;

use crate::protocol::Task;

pub type Result<T, E = DirectorError> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum DirectorError {
    #[error("director unreachable: {0}")]
    Unreachable(String),

    #[error("director returned a malformed {task} response: {detail}")]
    Malformed { task: Task, detail: String },

    #[error("no mock fixture for task {task} and prompt {prompt:?}")]
    MissingFixture { task: Task, prompt: String },

    #[error("protocol order violated: {0}")]
    Protocol(String),

    #[error("trajectory rejected: {0}")]
    Validation(String),

    #[error("director configuration: {0}")]
    Config(String),

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl DirectorError {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        DirectorError::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn malformed(task: Task, detail: impl Into<String>) -> Self {
        DirectorError::Malformed {
            task,
            detail: detail.into(),
        }
    }

    /// True for rejections of well-formed but unusable answers.
    pub fn is_validation(&self) -> bool {
        matches!(self, DirectorError::Validation(_))
    }
}
