//! Scenario files and the experiment runner behind the `cocycle` binary.

pub mod config;
pub mod run;

pub use config::{parse_config, parse_str, Experiment, InstanceKind, Scenario};
pub use run::{apply_overrides, run_scenario, summary_csv, Assertion, RunOutcome, SUMMARY_HEADER};
