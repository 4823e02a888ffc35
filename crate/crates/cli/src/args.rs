// SPDX-License-Identifier: MIT OR Apache-2.0

//! Flag groups shared by several commands.
//!
//! Every flag is optional at parse time so that unset flags fall through to
//! the config file and then to the command defaults.

use std::path::PathBuf;

use clap::Args;
use serde::Serialize;
use sparsedict_core::MpSelection;

#[derive(Args, Serialize, Debug, Clone, Default)]
pub struct CommonFlags {
    /// Random seed
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    /// Output directory (created if missing)
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub out_dir: Option<PathBuf>,
    /// JSON file with default values for any flag of this command
    #[arg(long)]
    #[serde(skip)]
    pub config: Option<PathBuf>,
}

#[derive(Args, Serialize, Debug, Clone, Default)]
pub struct DataFlags {
    /// Activation container, IDX image file, or directory with IDX files
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub data: Option<PathBuf>,
    /// IDX label file (used for stratified --limit)
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub labels: Option<PathBuf>,
    /// Keep at most this many samples
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub limit: Option<usize>,
}

/// Optimizer and loss settings.
#[derive(Args, Serialize, Debug, Clone, Default)]
pub struct HyperFlags {
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub epochs: Option<usize>,
    /// Minibatch size
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub batch: Option<usize>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub lr_init: Option<f64>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub lr_final: Option<f64>,
    /// Warmup length in optimizer steps (default: one epoch)
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub warmup_steps: Option<u64>,
    /// l1 weight (relu)
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub lambda: Option<f64>,
    /// l0 penalty weight (jumprelu)
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub target_l0: Option<f64>,
    /// Auxiliary loss weight (default depends on the variant)
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub aux_alpha: Option<f64>,
    /// Dead atoms used by the auxiliary loss (default min(2k, p/2))
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub aux_k: Option<usize>,
    /// Steps without activation after which an atom counts as dead
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub dead_steps: Option<u64>,
    /// Straight-through kernel width (jumprelu)
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub ste_bandwidth: Option<f64>,
    /// MP atom selection: signed or absolute
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub mp_selection: Option<MpSelection>,
    /// Stop gradients through the MP residual
    #[arg(long, num_args = 0..=1, default_missing_value = "true")]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub detach_residual: Option<bool>,
    /// Keep b_pre at the data mean
    #[arg(long, num_args = 0..=1, default_missing_value = "true")]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub freeze_b_pre: Option<bool>,
    /// Write a log row every this many optimizer steps
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub log_every: Option<u64>,
}
