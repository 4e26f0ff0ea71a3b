//! Experiment harness for prosocial learning agents: configuration files,
//! seeded parallel replicates, result CSVs, summaries and file formats.
//!
//! The algorithms live in [`prosocial_core`]; this crate adds everything
//! that needs the standard library.

pub mod config;
pub mod error;
pub mod formats;
pub mod harness;
pub mod output;

pub use config::{Assignment, ExperimentConfig, GameSpec, SweepSpec};
pub use error::{Error, Result};
pub use harness::{run_experiment, run_experiments, ExperimentRun, Label, ReplicateResult};
