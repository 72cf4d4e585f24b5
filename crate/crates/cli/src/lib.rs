//! Library half of the `gmcsim` command-line tool: configuration loading,
//! the experiment commands and their file outputs.

// `!(x > 0.0)` is used on purpose: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod commands;
pub mod config;
pub mod output;
pub mod selftest;

use gmcsim_core::ModelError;
use thiserror::Error;

pub const TOOL_VERSION: &str = env!("CARGO_PKG_VERSION");

/// Failure of a command, split by exit code.
#[derive(Debug, Error)]
pub enum CliError {
    /// Exit code 2. The message names the offending key.
    #[error("configuration error: {0}")]
    Config(String),
    /// Exit code 1.
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

    /// Model errors raised while validating a config block, with the block's
    /// key path prefixed onto the field name.
    pub(crate) fn from_validation(err: ModelError, path: &str) -> Self {
        match err.within(path) {
            ModelError::Invalid { field, reason } => {
                CliError::Config(format!("`{field}`: {reason}"))
            }
            other => CliError::Config(format!("`{path}`: {other}")),
        }
    }
}

impl From<ModelError> for CliError {
    fn from(err: ModelError) -> Self {
        CliError::Runtime(err.to_string())
    }
}

pub type CliResult<T> = std::result::Result<T, CliError>;
