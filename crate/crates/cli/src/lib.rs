//! Experiment runner: strict TOML configs, a staged pipeline writing
//! hash-stamped CSV and JSON artifacts, and parameter sweeps.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod artifacts;
pub mod config;
pub mod error;
pub mod pipeline;
pub mod sweep;

pub use artifacts::RunManifest;
pub use config::{parse_config, parse_config_str, ExperimentConfig};
pub use error::{CliError, Result};
pub use pipeline::{run_pipeline, RunOutcome, Stage};

/// Environment variable naming the directory that run directories live under.
pub const OUTPUT_ROOT_VAR: &str = "NLDIFF_OUTPUT_ROOT";
