//! Command implementations behind the `anomaly` binary.
//!
//! Every command takes an already validated [`config::PipelineConfig`] and
//! returns a [`CliError`] whose [`CliError::exit_code`] is what the process
//! should exit with.

// `!(x > 0.0)` is used on purpose so NaN fails validation.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod commands;
pub mod config;
pub mod render;
pub mod tables;

use thiserror::Error;

pub use config::PipelineConfig;

#[derive(Debug, Error)]
pub enum CliError {
    /// Bad configuration, bad arguments or mismatched schemas.
    #[error("{0}")]
    Config(String),
    /// Anything that went wrong while doing the work (I/O, numerics).
    #[error("{0}")]
    Runtime(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            CliError::Runtime(_) => 1,
        }
    }
}

pub(crate) fn runtime(msg: impl std::fmt::Display) -> CliError {
    CliError::Runtime(msg.to_string())
}
