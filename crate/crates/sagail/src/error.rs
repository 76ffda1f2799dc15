use std::io;
use std::path::{Path, PathBuf};

#[derive(Debug, thiserror::Error)]
pub enum AppError {
    /// Bad configuration, arguments or input files.
    #[error("configuration error: {0}")]
    Config(String),
    #[error("{}: {source}", path.display())]
    Io { path: PathBuf, source: io::Error },
    /// An invariant broke while running.
    #[error("runtime error: {0}")]
    Runtime(String),
}

impl AppError {
    pub fn exit_code(&self) -> i32 {
        match self {
            AppError::Config(_) | AppError::Io { .. } => 1,
            AppError::Runtime(_) => 2,
        }
    }

    pub fn io(path: &Path) -> impl FnOnce(io::Error) -> AppError + '_ {
        move |source| AppError::Io {
            path: path.to_path_buf(),
            source,
        }
    }
}

impl From<sagail_core::Error> for AppError {
    fn from(e: sagail_core::Error) -> Self {
        match e {
            sagail_core::Error::Config(_) | sagail_core::Error::MalformedTrajectory(_) => AppError::Config(e.to_string()),
            other => AppError::Runtime(other.to_string()),
        }
    }
}

pub type AppResult<T> = Result<T, AppError>;
