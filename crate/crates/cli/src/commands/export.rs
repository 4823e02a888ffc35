// SPDX-License-Identifier: MIT OR Apache-2.0

use std::fmt::Write as _;
use std::path::PathBuf;

use clap::Args;
use serde::{Deserialize, Serialize};
use sparsedict_core::encoder::encode_batch;
use sparsedict_core::metrics::{activation_stats, ActivationStats, SelectionOrder};
use sparsedict_core::Dictionary;

use crate::args::{CommonFlags, DataFlags};
use crate::config;
use crate::error::{CliError, CliResult};
use crate::input;
use crate::output::{atom_grid, ensure_dir, is_square_image, write_file};

#[derive(Args, Serialize, Debug, Clone, Default)]
pub struct ExportFlags {
    #[command(flatten)]
    #[serde(flatten)]
    pub common: CommonFlags,
    #[command(flatten)]
    #[serde(flatten)]
    pub data: DataFlags,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub checkpoint: Option<PathBuf>,
    /// Number of atoms per ranking
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub n: Option<usize>,
}

#[derive(Serialize, Deserialize, Debug, Clone, PartialEq)]
#[serde(default)]
pub struct ExportConfig {
    pub seed: u64,
    pub out_dir: PathBuf,
    pub data: Option<PathBuf>,
    pub labels: Option<PathBuf>,
    pub limit: Option<usize>,
    pub checkpoint: Option<PathBuf>,
    pub n: usize,
}

impl Default for ExportConfig {
    fn default() -> Self {
        ExportConfig {
            seed: 0,
            out_dir: PathBuf::from("out"),
            data: None,
            labels: None,
            limit: None,
            checkpoint: None,
            n: 25,
        }
    }
}

/// Top atoms under both rankings.
#[derive(Debug, Clone, PartialEq)]
pub struct AtomRanking {
    pub by_freq: Vec<usize>,
    pub by_value: Vec<usize>,
}

pub fn rank_atoms(stats: &ActivationStats, n: usize) -> AtomRanking {
    let mut by_freq = stats.rank_by_frequency();
    let mut by_value = stats.rank_by_mean_value();
    by_freq.truncate(n);
    by_value.truncate(n);
    AtomRanking { by_freq, by_value }
}

pub fn atoms_csv(dict: &Dictionary, stats: &ActivationStats, atoms: &[usize]) -> String {
    let mut s = String::from("rank,atom,freq,mean_value");
    for i in 0..dict.m() {
        let _ = write!(s, ",x{i}");
    }
    s.push('\n');
    for (rank, &j) in atoms.iter().enumerate() {
        let _ = write!(s, "{},{j},{},{}", rank + 1, stats.freq[j], stats.mean_value[j]);
        for v in dict.d.column_iter(j) {
            let _ = write!(s, ",{v}");
        }
        s.push('\n');
    }
    s
}

pub fn execute(flags: &ExportFlags) -> CliResult<()> {
    let cfg: ExportConfig = config::resolve(flags.common.config.as_deref(), flags)?;
    let ranking = run(&cfg)?;
    println!("top atoms by frequency: {:?}", ranking.by_freq);
    println!("top atoms by mean value: {:?}", ranking.by_value);
    Ok(())
}

/// Writes `atoms_by_freq.csv` and `atoms_by_value.csv`, plus `.pgm` grids
/// when the input dimension is a perfect square.
pub fn run(cfg: &ExportConfig) -> CliResult<AtomRanking> {
    let (dict, enc, _) = super::open_checkpoint(super::required(&cfg.checkpoint, "--checkpoint")?)?;
    if cfg.n == 0 || cfg.n > dict.p() {
        return Err(CliError::Validation(format!(
            "--n = {} must be in 1..={} (the number of atoms)",
            cfg.n,
            dict.p()
        )));
    }
    let data = input::load(super::required(&cfg.data, "--data")?, cfg.labels.as_deref(), cfg.limit)?;
    super::check_dims(&dict, &data)?;

    let rows: Vec<&[f64]> = data.samples().row_iter().collect();
    let codes = encode_batch(&dict, &enc, &rows, None)?;
    let stats = activation_stats(&codes, dict.p(), SelectionOrder::for_variant(enc.variant))?;
    let ranking = rank_atoms(&stats, cfg.n);

    ensure_dir(&cfg.out_dir)?;
    for (name, atoms) in [("atoms_by_freq", &ranking.by_freq), ("atoms_by_value", &ranking.by_value)] {
        write_file(&cfg.out_dir.join(format!("{name}.csv")), atoms_csv(&dict, &stats, atoms).as_bytes())?;
        if is_square_image(dict.m()) {
            let tiles: Vec<Vec<f64>> = atoms.iter().map(|&j| dict.d.column_iter(j).collect()).collect();
            write_file(&cfg.out_dir.join(format!("{name}.pgm")), &atom_grid(&tiles).to_pgm())?;
        }
    }
    config::echo(&cfg.out_dir, "export-atoms", cfg)?;
    Ok(ranking)
}
