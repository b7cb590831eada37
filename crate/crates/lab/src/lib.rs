//! Experiment harness around `pat-core`: TOML configs, binary field and
//! trace files, CSV exports, seeded ensembles run on a worker pool, and
//! write-once run directories.

pub mod bench;
pub mod commands;
pub mod config;
pub mod error;
pub mod experiment;
pub mod formats;
pub mod rundir;
pub mod seeds;

pub use commands::{run, Command, Outcome, RunOptions};
pub use config::ExperimentConfig;
pub use error::{LabError, Result};
