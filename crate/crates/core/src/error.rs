use thiserror::Error;

pub type Result<T> = std::result::Result<T, MtlError>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MtlError {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("non-finite value in {0}")]
    NonFinite(&'static str),

    #[error("unknown strategy `{0}` (expected one of ls, mgda, imtl-g, banditmtl, emtl)")]
    UnknownStrategy(String),

    #[error("unknown problem `{0}` (expected quad2 or synthreg)")]
    UnknownProblem(String),

    /// IMTL-G produced a weight below the clamp window.
    #[error("negative weight {weight} for task {task}")]
    NegativeWeight { task: usize, weight: f64 },

    #[error("run failed at step {step}: {source}")]
    Run {
        step: usize,
        #[source]
        source: Box<MtlError>,
    },

    #[error("i/o error: {0}")]
    Io(String),
}

impl MtlError {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        MtlError::InvalidInput(msg.into())
    }

    pub(crate) fn at_step(self, step: usize) -> Self {
        MtlError::Run {
            step,
            source: Box::new(self),
        }
    }
}

impl From<std::io::Error> for MtlError {
    fn from(e: std::io::Error) -> Self {
        MtlError::Io(e.to_string())
    }
}
