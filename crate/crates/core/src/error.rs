//! Crate-wide error type. Shape mismatches in the numeric kernels are
//! programming errors and panic instead.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("config error: {0}")]
    Config(String),

    #[error("parse error at line {line}: {msg}")]
    Parse { line: usize, msg: String },

    #[error("selection error: {0}")]
    Selection(String),

    #[error("evaluation error: {0}")]
    Eval(String),

    #[error("numeric error: {0}")]
    Numeric(String),

    #[error("stage {stage}: {source}")]
    Stage {
        stage: usize,
        #[source]
        source: Box<Error>,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    /// Attach the active-learning stage index to an error bubbling out of it.
    pub fn at_stage(self, stage: usize) -> Error {
        Error::Stage {
            stage,
            source: Box::new(self),
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
