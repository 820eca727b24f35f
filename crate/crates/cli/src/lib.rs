//! Config-driven runner for the experiments of `wkb-core`.

pub mod config;
pub mod experiments;

pub use config::{Experiment, ExperimentConfig};
pub use experiments::{describe, execute, load, prepare, run, Failure, Plan};
