// SPDX-License-Identifier: MIT OR Apache-2.0

use std::path::PathBuf;

use clap::Args;
use serde::{Deserialize, Serialize};
use sparsedict_core::dictionary::encode_checkpoint;
use sparsedict_core::trainer::{evaluate_batch, LossBreakdown};
use sparsedict_core::Variant;

use crate::args::{CommonFlags, DataFlags, HyperFlags};
use crate::config;
use crate::error::CliResult;
use crate::input;
use crate::model::{train_model, validate_model, Hyper, Trained};
use crate::output::{ensure_dir, write_file};

#[derive(Args, Serialize, Debug, Clone, Default)]
pub struct TrainFlags {
    #[command(flatten)]
    #[serde(flatten)]
    pub common: CommonFlags,
    #[command(flatten)]
    #[serde(flatten)]
    pub data: DataFlags,
    /// relu, jumprelu, topk, batchtopk or mp
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub variant: Option<Variant>,
    /// Sparsity (TopK, BatchTopK) or number of MP steps
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub k: Option<usize>,
    /// Number of atoms
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub p: Option<usize>,
    #[command(flatten)]
    #[serde(flatten)]
    pub hyper: HyperFlags,
}

#[derive(Serialize, Deserialize, Debug, Clone, PartialEq)]
#[serde(default)]
pub struct TrainConfig {
    pub seed: u64,
    pub out_dir: PathBuf,
    pub data: Option<PathBuf>,
    pub labels: Option<PathBuf>,
    pub limit: Option<usize>,
    pub variant: Variant,
    pub k: usize,
    pub p: usize,
    #[serde(flatten)]
    pub hyper: Hyper,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            seed: 0,
            out_dir: PathBuf::from("out"),
            data: None,
            labels: None,
            limit: None,
            variant: Variant::Mp,
            k: 10,
            p: 1000,
            hyper: Hyper::default(),
        }
    }
}

pub fn execute(flags: &TrainFlags) -> CliResult<()> {
    let cfg: TrainConfig = config::resolve(flags.common.config.as_deref(), flags)?;
    let (trained, final_loss) = run(&cfg)?;
    println!(
        "trained {} (k = {}, p = {}) for {} steps",
        trained.cfg.variant, trained.cfg.k, cfg.p, trained.meta.train_steps
    );
    println!(
        "final loss: recon = {}, sparsity_penalty = {}, aux = {}, total = {}, l0 = {}",
        final_loss.recon, final_loss.sparsity_penalty, final_loss.aux, final_loss.total, final_loss.l0
    );
    Ok(())
}

/// Trains from `cfg` and writes `checkpoint.sdl`, `train_log.csv` and
/// `run_config.json` into `cfg.out_dir`. Returns the model and the loss of
/// the last logged step (or of the untrained model on the whole dataset
/// when no step was taken).
pub fn run(cfg: &TrainConfig) -> CliResult<(Trained, LossBreakdown)> {
    validate_model(&cfg.hyper.encoder_config(cfg.variant, cfg.k, cfg.p), cfg.p)?;
    cfg.hyper.validate()?;
    let data_path = super::required(&cfg.data, "--data")?;
    let data = input::load(data_path, cfg.labels.as_deref(), cfg.limit)?;

    let trained = train_model(&cfg.hyper, cfg.variant, cfg.k, cfg.p, cfg.seed, &data)?;
    let final_loss = match trained.log.records.last() {
        Some(r) => r.loss,
        None => {
            let rows: Vec<&[f64]> = data.samples().row_iter().collect();
            evaluate_batch(&trained.dict, &trained.cfg, &rows, None)?.loss
        }
    };

    ensure_dir(&cfg.out_dir)?;
    let bytes = encode_checkpoint(&trained.dict, &trained.cfg, &trained.meta)?;
    write_file(&cfg.out_dir.join("checkpoint.sdl"), &bytes)?;
    write_file(&cfg.out_dir.join("train_log.csv"), trained.log.to_csv().as_bytes())?;
    config::echo(&cfg.out_dir, "train", cfg)?;
    Ok((trained, final_loss))
}
