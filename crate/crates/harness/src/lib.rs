//! Experiment runner for the cooperative semantic communication simulator.

pub mod config;
pub mod dataset;
pub mod experiments;
pub mod kbsim;
pub mod records;

pub use config::{ExperimentConfig, Scheme};
pub use records::{emit_csv, parse_csv, to_csv, Metric, RunRecord};
