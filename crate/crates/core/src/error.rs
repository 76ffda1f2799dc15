use alloc::string::String;

pub type Result<T, E = Error> = core::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("dimension mismatch in {context}: expected {expected}, got {got}")]
    DimensionMismatch {
        context: &'static str,
        expected: usize,
        got: usize,
    },
    #[error("non-finite value encountered in {0}")]
    NonFinite(&'static str),
    #[error("episode already finished after {0} steps")]
    EpisodeFinished(usize),
    #[error("malformed trajectory: {0}")]
    MalformedTrajectory(String),
    #[error("cannot sample from empty {0} buffer")]
    EmptyBuffer(&'static str),
    #[error("demo generation reached only {achieved} of {requested} successes in {attempts} episodes")]
    DemoGeneration {
        achieved: usize,
        requested: usize,
        attempts: usize,
    },
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("invariant violated: {0}")]
    Invariant(String),
}

impl Error {
    pub(crate) fn dim(context: &'static str, expected: usize, got: usize) -> Self {
        Error::DimensionMismatch {
            context,
            expected,
            got,
        }
    }
}
