//! Std companion to `somlab-core`: MNIST loading, file formats, experiment
//! configs, the experiment runner and the `somlab` command line tool.

pub mod config;
pub mod error;
pub mod experiment;
pub mod formats;
pub mod idx;

pub use config::{preset, ExperimentConfig, ExtractorConfig, PRESETS};
pub use error::{Error, Result};
pub use experiment::{run_experiment, run_sweep, ExperimentReport};
