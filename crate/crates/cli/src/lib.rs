//! Experiment orchestration for `rtn-trng`: configuration files, artifact
//! manifests, subcommands and the canned reproduction targets.

pub mod commands;
pub mod config;
pub mod error;
pub mod experiments;
pub mod manifest;
pub mod repro;

pub use config::ExperimentConfig;
pub use error::{CliError, Result};

/// Environment variable naming the default output root.
pub const OUT_ENV: &str = "RTN_TRNG_OUT";
/// Output root when neither `--out`, the environment nor the config names one.
pub const DEFAULT_OUT: &str = "rtn-trng-out";
