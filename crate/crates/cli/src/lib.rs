//! Experiment harness for `msmpc-core`: configuration, file formats and the
//! pipeline stages behind the `msmpc` command.

pub mod config;
pub mod error;
pub mod formats;
pub mod harness;

pub use config::ExperimentConfig;
pub use error::{HarnessError, Result};
