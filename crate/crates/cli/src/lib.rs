// SPDX-License-Identifier: MIT OR Apache-2.0

//! The `sparsedict` command-line tool.
//!
//! Each command resolves its settings from flags, an optional JSON config
//! file and built-in defaults (in that order), writes its outputs into
//! `--out-dir`, and records the effective settings in `run_config.json`.

pub mod args;
pub mod commands;
pub mod config;
pub mod error;
pub mod input;
pub mod model;
pub mod output;

pub use commands::{run, Cli, Command};
pub use error::{CliError, CliResult};
