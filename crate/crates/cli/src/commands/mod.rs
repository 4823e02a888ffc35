// SPDX-License-Identifier: MIT OR Apache-2.0

use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand};
use sparsedict_core::data::Dataset;
use sparsedict_core::dictionary::{load_checkpoint, CheckpointMeta};
use sparsedict_core::{Dictionary, EncoderConfig};

use crate::error::{CliError, CliResult};

pub mod eval;
pub mod export;
pub mod inspect;
pub mod recovery;
pub mod sweep;
pub mod synthetic;
pub mod train;

#[derive(Parser, Debug)]
#[command(name = "sparsedict", version, about = "Train and analyze sparse autoencoders and MP-SAEs")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Train a dictionary and write checkpoint.sdl and train_log.csv
    Train(train::TrainFlags),
    /// Compute R², Babel, co-activation, usage and residual-curve CSVs
    Eval(eval::EvalFlags),
    /// Train and score a grid of variants, k, p and seeds
    Sweep(sweep::SweepFlags),
    /// Write step-by-step reconstructions of selected samples
    Inspect(inspect::InspectFlags),
    /// Render the most used atoms as image grids and CSVs
    ExportAtoms(export::ExportFlags),
    /// Generate a synthetic dataset from a known sparse dictionary
    GenSynthetic(synthetic::SynthFlags),
    /// Score a learned dictionary against a ground-truth dictionary
    RecoveryScore(recovery::RecoveryFlags),
}

pub fn run(cli: Cli) -> CliResult<()> {
    match cli.command {
        Command::Train(f) => train::execute(&f),
        Command::Eval(f) => eval::execute(&f),
        Command::Sweep(f) => sweep::execute(&f),
        Command::Inspect(f) => inspect::execute(&f),
        Command::ExportAtoms(f) => export::execute(&f),
        Command::GenSynthetic(f) => synthetic::execute(&f),
        Command::RecoveryScore(f) => recovery::execute(&f),
    }
}

pub(crate) fn required<'a>(value: &'a Option<PathBuf>, flag: &str) -> CliResult<&'a Path> {
    value
        .as_deref()
        .ok_or_else(|| CliError::Validation(format!("{flag} is required")))
}

pub(crate) fn open_checkpoint(path: &Path) -> CliResult<(Dictionary, EncoderConfig, CheckpointMeta)> {
    Ok(load_checkpoint(path)?)
}

pub(crate) fn check_dims(dict: &Dictionary, data: &Dataset) -> CliResult<()> {
    if dict.m() != data.m() {
        return Err(CliError::Validation(format!(
            "checkpoint expects {} input dimensions but the data has {}",
            dict.m(),
            data.m()
        )));
    }
    Ok(())
}
