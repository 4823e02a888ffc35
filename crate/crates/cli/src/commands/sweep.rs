// SPDX-License-Identifier: MIT OR Apache-2.0

use std::fmt::Write as _;
use std::path::PathBuf;

use clap::Args;
use serde::{Deserialize, Serialize};
use sparsedict_core::dictionary::encode_checkpoint;
use sparsedict_core::metrics::{r_squared, reconstruct};
use sparsedict_core::Variant;

use crate::args::{CommonFlags, DataFlags, HyperFlags};
use crate::config;
use crate::error::{CliError, CliResult};
use crate::input;
use crate::model::{train_model, validate_model, Hyper};
use crate::output::{ensure_dir, write_file};

#[derive(Args, Serialize, Debug, Clone, Default)]
pub struct SweepFlags {
    #[command(flatten)]
    #[serde(flatten)]
    pub common: CommonFlags,
    #[command(flatten)]
    #[serde(flatten)]
    pub data: DataFlags,
    /// Variants, comma separated
    #[arg(long, value_delimiter = ',')]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub variant: Option<Vec<Variant>>,
    /// Sparsity values, comma separated
    #[arg(long, value_delimiter = ',')]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub k: Option<Vec<usize>>,
    /// Dictionary sizes, comma separated
    #[arg(long, value_delimiter = ',')]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub p: Option<Vec<usize>>,
    /// Seeds, comma separated (default: --seed)
    #[arg(long, value_delimiter = ',')]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub seeds: Option<Vec<u64>>,
    /// Also write one checkpoint per grid cell
    #[arg(long, num_args = 0..=1, default_missing_value = "true")]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub save_checkpoints: Option<bool>,
    #[command(flatten)]
    #[serde(flatten)]
    pub hyper: HyperFlags,
}

#[derive(Serialize, Deserialize, Debug, Clone, PartialEq)]
#[serde(default)]
pub struct SweepConfig {
    pub seed: u64,
    pub out_dir: PathBuf,
    pub data: Option<PathBuf>,
    pub labels: Option<PathBuf>,
    pub limit: Option<usize>,
    pub variant: Vec<Variant>,
    pub k: Vec<usize>,
    pub p: Vec<usize>,
    pub seeds: Option<Vec<u64>>,
    pub save_checkpoints: bool,
    #[serde(flatten)]
    pub hyper: Hyper,
}

impl Default for SweepConfig {
    fn default() -> Self {
        SweepConfig {
            seed: 0,
            out_dir: PathBuf::from("out"),
            data: None,
            labels: None,
            limit: None,
            variant: vec![Variant::Mp, Variant::TopK],
            k: vec![10],
            p: vec![1000],
            seeds: None,
            save_checkpoints: false,
            hyper: Hyper::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepRow {
    pub variant: Variant,
    pub k: usize,
    pub p: usize,
    pub seed: u64,
    pub r2: f64,
}

pub fn execute(flags: &SweepFlags) -> CliResult<()> {
    let cfg: SweepConfig = config::resolve(flags.common.config.as_deref(), flags)?;
    let rows = run(&cfg)?;
    print!("{}", sweep_csv(&rows));
    Ok(())
}

/// Grid cells in output order: variant, then k, then p, then seed.
fn cells(cfg: &SweepConfig) -> Vec<(Variant, usize, usize, u64)> {
    let seeds = cfg.seeds.clone().unwrap_or_else(|| vec![cfg.seed]);
    let mut out = Vec::new();
    for &v in &cfg.variant {
        for &k in &cfg.k {
            for &p in &cfg.p {
                for &s in &seeds {
                    out.push((v, k, p, s));
                }
            }
        }
    }
    out
}

/// Trains every grid cell and scores R² on the training data. Writes
/// `sweep.csv` and `run_config.json`.
pub fn run(cfg: &SweepConfig) -> CliResult<Vec<SweepRow>> {
    let grid = cells(cfg);
    if grid.is_empty() {
        return Err(CliError::Validation("empty grid: --variant, --k, --p and --seeds need values".to_string()));
    }
    cfg.hyper.validate()?;
    for &(v, k, p, _) in &grid {
        validate_model(&cfg.hyper.encoder_config(v, k, p), p)?;
    }
    let data = input::load(super::required(&cfg.data, "--data")?, cfg.labels.as_deref(), cfg.limit)?;
    ensure_dir(&cfg.out_dir)?;

    let mut rows = Vec::with_capacity(grid.len());
    for (variant, k, p, seed) in grid {
        let t = train_model(&cfg.hyper, variant, k, p, seed, &data)?;
        let (xhat, _) = reconstruct(&t.dict, &t.cfg, data.samples(), None)?;
        let r2 = r_squared(data.samples(), &xhat)?;
        if cfg.save_checkpoints {
            let name = format!("checkpoint_{variant}_k{k}_p{p}_s{seed}.sdl");
            write_file(&cfg.out_dir.join(name), &encode_checkpoint(&t.dict, &t.cfg, &t.meta)?)?;
        }
        rows.push(SweepRow { variant, k, p, seed, r2 });
    }
    write_file(&cfg.out_dir.join("sweep.csv"), sweep_csv(&rows).as_bytes())?;
    config::echo(&cfg.out_dir, "sweep", cfg)?;
    Ok(rows)
}

pub fn sweep_csv(rows: &[SweepRow]) -> String {
    let mut s = String::from("variant,k,p,seed,r2\n");
    for r in rows {
        let _ = writeln!(s, "{},{},{},{},{}", r.variant, r.k, r.p, r.seed, r.r2);
    }
    s
}
