//! Experiment commands shared by the CLI, benches and tests.
//!
//! Each command turns an [`ExperimentConfig`] into a CSV table and a JSON
//! summary. Monte-Carlo runs execute in parallel but are collected in run
//! order, so output is byte-identical for a fixed configuration.

mod commands;
mod config;

pub use commands::{
    cmd_complexity, cmd_coverage, cmd_normality, cmd_run, cmd_sketch_audit, list_problems,
    CommandOutput, Provenance, MIN_COVERAGE_RUNS,
};
pub use config::{parse_direction, AuditSource, ExperimentConfig, NormalityMode, KEYS};
