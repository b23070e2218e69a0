use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    /// A numeric input was non-finite or otherwise unusable.
    #[error("invalid input: {0}")]
    InvalidInput(String),

    /// A model, sensor or config field violates its invariant. `field` is a
    /// dotted path such as `body[2].inertia`.
    #[error("{field}: {message}")]
    Field { field: String, message: String },

    /// The mass matrix (or another SPD system) could not be factorized.
    #[error("model error: {0}")]
    Model(String),

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    /// A perturbed evaluation produced non-finite output.
    #[error("evaluation error at state index {index}: {message}")]
    Evaluation { index: usize, message: String },

    #[error("integration diverged at step {step}")]
    Diverged { step: usize },

    #[error("non-monotone timestamps at frame {frame}")]
    NonMonotone { frame: usize },

    #[error("{0}")]
    Data(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}: {message}")]
    Parse { path: PathBuf, message: String },

    /// Failure inside one stage of an experiment run.
    #[error("stage `{stage}` failed: {source}")]
    Stage {
        stage: &'static str,
        #[source]
        source: Box<Error>,
    },
}

impl Error {
    pub(crate) fn field(field: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Field {
            field: field.into(),
            message: message.into(),
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn in_stage(self, stage: &'static str) -> Self {
        Error::Stage {
            stage,
            source: Box::new(self),
        }
    }
}
