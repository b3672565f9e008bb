//! Experiment harness: configs, seeded replications, summaries and output.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod cli;
pub mod config;
pub mod emit;
pub mod runner;
pub mod stats;

pub use config::{ConfigError, ExperimentConfig};
pub use emit::{emit_results, Format};
pub use runner::{run_experiment, RunError, RunOptions};
pub use stats::SummaryStats;
