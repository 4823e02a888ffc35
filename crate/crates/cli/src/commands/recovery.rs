// SPDX-License-Identifier: MIT OR Apache-2.0

use std::path::{Path, PathBuf};

use clap::Args;
use serde::{Deserialize, Serialize};
use sparsedict_core::data::{load_activation_matrix, recovery_score, RecoveryScore};
use sparsedict_core::DenseMatrix;

use crate::args::CommonFlags;
use crate::config;
use crate::error::{CliError, CliResult};
use crate::output::{ensure_dir, write_file};

#[derive(Args, Serialize, Debug, Clone, Default)]
pub struct RecoveryFlags {
    #[command(flatten)]
    #[serde(flatten)]
    pub common: CommonFlags,
    /// Checkpoint holding the learned dictionary
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub checkpoint: Option<PathBuf>,
    /// Learned atoms as an activation container, one atom per row
    #[arg(long, conflicts_with = "checkpoint")]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub learned: Option<PathBuf>,
    /// Ground-truth atoms as an activation container, one atom per row
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub truth: Option<PathBuf>,
    /// Minimum |cos| for a match
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub threshold: Option<f64>,
}

#[derive(Serialize, Deserialize, Debug, Clone, PartialEq)]
#[serde(default)]
pub struct RecoveryConfig {
    pub seed: u64,
    pub out_dir: PathBuf,
    pub checkpoint: Option<PathBuf>,
    pub learned: Option<PathBuf>,
    pub truth: Option<PathBuf>,
    pub threshold: f64,
}

impl Default for RecoveryConfig {
    fn default() -> Self {
        RecoveryConfig {
            seed: 0,
            out_dir: PathBuf::from("out"),
            checkpoint: None,
            learned: None,
            truth: None,
            threshold: 0.9,
        }
    }
}

/// Atoms stored one per row, returned as columns.
fn atoms_from_rows(path: &Path) -> CliResult<DenseMatrix> {
    Ok(load_activation_matrix(path)?.samples().transpose())
}

pub fn recovery_csv(threshold: f64, s: &RecoveryScore) -> String {
    format!(
        "threshold,matched_fraction,mean_best_cosine\n{threshold},{},{}\n",
        s.matched_fraction, s.mean_best_cosine
    )
}

pub fn execute(flags: &RecoveryFlags) -> CliResult<()> {
    let cfg: RecoveryConfig = config::resolve(flags.common.config.as_deref(), flags)?;
    let s = run(&cfg)?;
    println!(
        "matched fraction = {} at |cos| ≥ {}, mean best cosine = {}",
        s.matched_fraction, cfg.threshold, s.mean_best_cosine
    );
    Ok(())
}

/// Scores the learned dictionary and writes `recovery.csv`.
pub fn run(cfg: &RecoveryConfig) -> CliResult<RecoveryScore> {
    if !(0.0..=1.0).contains(&cfg.threshold) {
        return Err(CliError::Validation(format!("--threshold must be in [0, 1], got {}", cfg.threshold)));
    }
    let truth = atoms_from_rows(super::required(&cfg.truth, "--truth")?)?;
    let learned = match (&cfg.checkpoint, &cfg.learned) {
        (Some(c), None) => super::open_checkpoint(c)?.0.d,
        (None, Some(l)) => atoms_from_rows(l)?,
        _ => {
            return Err(CliError::Validation(
                "exactly one of --checkpoint or --learned is required".to_string(),
            ))
        }
    };
    if learned.rows() != truth.rows() {
        return Err(CliError::Validation(format!(
            "learned atoms have dimension {} but ground-truth atoms have {}",
            learned.rows(),
            truth.rows()
        )));
    }
    let score = recovery_score(&learned, &truth, cfg.threshold)?;
    ensure_dir(&cfg.out_dir)?;
    write_file(&cfg.out_dir.join("recovery.csv"), recovery_csv(cfg.threshold, &score).as_bytes())?;
    config::echo(&cfg.out_dir, "recovery-score", cfg)?;
    Ok(score)
}
