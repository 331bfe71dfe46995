//! Experiment plumbing: instances, configuration, pipelines and reports.

pub mod config;
pub mod instances;
pub mod pipeline;
pub mod report;

pub use config::{ExperimentConfig, InstanceSource, Mode, ReprSpec};
pub use pipeline::{run, run_suite, Outcome, Setup, SuiteReport, SuiteRow};
