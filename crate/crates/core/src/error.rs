use thiserror::Error;

pub type Result<T> = std::result::Result<T, AcerError>;

#[derive(Debug, Error)]
pub enum AcerError {
    #[error("shape mismatch in {what}: expected {expected}, got {actual}")]
    Shape {
        what: &'static str,
        expected: usize,
        actual: usize,
    },

    #[error("domain error: {0}")]
    Domain(String),

    #[error("insufficient experiences: buffer holds {have}, need {need}")]
    InsufficientExperiences { have: usize, need: usize },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("usage error: {0}")]
    Usage(String),

    #[error("checkpoint error: {0}")]
    Checkpoint(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl AcerError {
    pub(crate) fn shape(what: &'static str, expected: usize, actual: usize) -> Self {
        AcerError::Shape {
            what,
            expected,
            actual,
        }
    }
}

pub(crate) fn check_len(what: &'static str, expected: usize, actual: usize) -> Result<()> {
    if expected == actual {
        Ok(())
    } else {
        Err(AcerError::shape(what, expected, actual))
    }
}
