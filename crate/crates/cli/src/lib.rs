//! Command-line harness for the expansion pricer: experiment configs, the
//! model and payoff registries, convergence studies and identity suites.

// `!(x > 0.0)` is used on purpose so that NaN is rejected too.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod commands;
pub mod config;
pub mod error;
pub mod output;
pub mod registry;
pub mod verify;

pub use config::{ExperimentConfig, Overrides};
pub use error::{CliError, CliResult};
