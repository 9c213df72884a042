//! Experiment orchestration behind the `hartree-wkb` binary.

pub mod config;
pub mod run;
pub mod selftest;

pub use config::{parse_config, parse_config_for, ExperimentConfig, Subcommand};
pub use run::{run, RunReport};
