// SPDX-License-Identifier: MIT OR Apache-2.0

use std::fmt::Write as _;
use std::path::PathBuf;

use clap::{Args, ValueEnum};
use serde::{Deserialize, Serialize};
use sparsedict_core::container::Dtype;
use sparsedict_core::data::{encode_activation_matrix, generate_synthetic, CoherenceMode, SyntheticData, SyntheticSpec};
use sparsedict_core::encoder::SparseCode;

use crate::args::CommonFlags;
use crate::config;
use crate::error::{CliError, CliResult};
use crate::output::{ensure_dir, write_file};

#[derive(ValueEnum, Serialize, Deserialize, Debug, Clone, Copy, PartialEq, Eq)]
#[serde(rename_all = "lowercase")]
pub enum Coherence {
    Orthogonal,
    Random,
    Block,
}

#[derive(Args, Serialize, Debug, Clone, Default)]
pub struct SynthFlags {
    #[command(flatten)]
    #[serde(flatten)]
    pub common: CommonFlags,
    /// Input dimension
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub m: Option<usize>,
    /// Number of ground-truth atoms
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub p_true: Option<usize>,
    /// Active atoms per sample
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub k_true: Option<usize>,
    /// Number of samples
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub n: Option<usize>,
    #[arg(long, value_enum)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub coherence: Option<Coherence>,
    /// Atoms per block (block coherence)
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub block_size: Option<usize>,
    /// Pairwise correlation within a block (block coherence)
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub within_block_coherence: Option<f64>,
    /// Standard deviation of additive Gaussian noise
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub noise_sigma: Option<f64>,
}

#[derive(Serialize, Deserialize, Debug, Clone, PartialEq)]
#[serde(default)]
pub struct SynthConfig {
    pub seed: u64,
    pub out_dir: PathBuf,
    pub m: usize,
    pub p_true: usize,
    pub k_true: usize,
    pub n: usize,
    pub coherence: Coherence,
    pub block_size: usize,
    pub within_block_coherence: f64,
    pub noise_sigma: f64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            seed: 0,
            out_dir: PathBuf::from("out"),
            m: 64,
            p_true: 64,
            k_true: 3,
            n: 20000,
            coherence: Coherence::Orthogonal,
            block_size: 4,
            within_block_coherence: 0.5,
            noise_sigma: 0.01,
        }
    }
}

impl SynthConfig {
    pub fn spec(&self) -> SyntheticSpec {
        let coherence_mode = match self.coherence {
            Coherence::Orthogonal => CoherenceMode::Orthogonal,
            Coherence::Random => CoherenceMode::Random,
            Coherence::Block => CoherenceMode::Block {
                block_size: self.block_size,
                within_block_coherence: self.within_block_coherence,
            },
        };
        SyntheticSpec {
            m: self.m,
            p_true: self.p_true,
            k_true: self.k_true,
            n: self.n,
            coherence_mode,
            noise_sigma: self.noise_sigma,
            seed: self.seed,
        }
    }
}

pub fn codes_csv(codes: &[SparseCode]) -> String {
    let mut s = String::from("sample,atom,value\n");
    for (i, c) in codes.iter().enumerate() {
        for (j, v) in c.active() {
            let _ = writeln!(s, "{i},{j},{v}");
        }
    }
    s
}

pub fn execute(flags: &SynthFlags) -> CliResult<()> {
    let cfg: SynthConfig = config::resolve(flags.common.config.as_deref(), flags)?;
    let data = run(&cfg)?;
    println!(
        "wrote {} samples of dimension {} from {} atoms to {}",
        data.dataset.n(),
        data.dataset.m(),
        data.dictionary.cols(),
        cfg.out_dir.display()
    );
    Ok(())
}

/// Writes `data.sdla`, `true_dictionary.sdla` (one atom per row) and
/// `codes.csv`.
pub fn run(cfg: &SynthConfig) -> CliResult<SyntheticData> {
    let spec = cfg.spec();
    spec.validate().map_err(|e| CliError::Validation(e.to_string()))?;
    let data = generate_synthetic(&spec)?;
    ensure_dir(&cfg.out_dir)?;
    write_file(
        &cfg.out_dir.join("data.sdla"),
        &encode_activation_matrix(data.dataset.samples(), Dtype::F64),
    )?;
    write_file(
        &cfg.out_dir.join("true_dictionary.sdla"),
        &encode_activation_matrix(&data.dictionary.transpose(), Dtype::F64),
    )?;
    write_file(&cfg.out_dir.join("codes.csv"), codes_csv(&data.codes).as_bytes())?;
    config::echo(&cfg.out_dir, "gen-synthetic", cfg)?;
    Ok(data)
}
