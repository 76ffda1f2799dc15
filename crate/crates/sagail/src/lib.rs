//! File formats, configuration loading, multi-seed runs and the
//! command-line front end for `sagail-core`.

pub mod checkpoint;
pub mod config;
pub mod dataset;
pub mod error;
pub mod metrics;
pub mod run;

pub use error::{AppError, AppResult};
