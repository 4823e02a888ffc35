// SPDX-License-Identifier: MIT OR Apache-2.0

//! Training settings and the train-from-scratch routine shared by `train`,
//! `sweep` and the acceptance suite.

use serde::{Deserialize, Serialize};
use sparsedict_core::data::Dataset;
use sparsedict_core::dictionary::CheckpointMeta;
use sparsedict_core::trainer::{train, TrainLog, TrainOptions};
use sparsedict_core::{Dictionary, EncoderConfig, MpSelection, Rng, Variant};

use crate::error::{CliError, CliResult};

/// RNG stream used for dictionary initialization.
const INIT_STREAM: u64 = 0x696e_6974;

#[derive(Serialize, Deserialize, Debug, Clone, PartialEq)]
#[serde(default)]
pub struct Hyper {
    pub epochs: usize,
    pub batch: usize,
    pub lr_init: f64,
    pub lr_final: f64,
    pub warmup_steps: Option<u64>,
    pub lambda: f64,
    pub target_l0: f64,
    pub aux_alpha: Option<f64>,
    pub aux_k: Option<usize>,
    pub dead_steps: u64,
    pub ste_bandwidth: f64,
    pub mp_selection: MpSelection,
    pub detach_residual: bool,
    pub freeze_b_pre: bool,
    pub log_every: u64,
}

impl Default for Hyper {
    fn default() -> Self {
        let opts = TrainOptions::default();
        let enc = EncoderConfig::new(Variant::Mp, 10, 1000);
        Hyper {
            epochs: opts.epochs,
            batch: opts.batch_size,
            lr_init: opts.lr_init,
            lr_final: opts.lr_final,
            warmup_steps: opts.warmup_steps,
            lambda: enc.lambda,
            target_l0: enc.target_l0,
            aux_alpha: None,
            aux_k: None,
            dead_steps: enc.dead_steps_threshold,
            ste_bandwidth: enc.ste_bandwidth,
            mp_selection: enc.mp_selection,
            detach_residual: enc.detach_residual,
            freeze_b_pre: opts.freeze_b_pre,
            log_every: opts.log_every,
        }
    }
}

impl Hyper {
    pub fn encoder_config(&self, variant: Variant, k: usize, p: usize) -> EncoderConfig {
        let mut cfg = EncoderConfig::new(variant, k, p);
        cfg.lambda = self.lambda;
        cfg.target_l0 = self.target_l0;
        if let Some(a) = self.aux_alpha {
            cfg.aux_alpha = a;
        }
        if let Some(a) = self.aux_k {
            cfg.aux_k = a;
        }
        cfg.dead_steps_threshold = self.dead_steps;
        cfg.ste_bandwidth = self.ste_bandwidth;
        cfg.mp_selection = self.mp_selection;
        cfg.detach_residual = self.detach_residual;
        cfg
    }

    pub fn train_options(&self, seed: u64) -> TrainOptions {
        TrainOptions {
            epochs: self.epochs,
            batch_size: self.batch,
            seed,
            lr_init: self.lr_init,
            lr_final: self.lr_final,
            warmup_steps: self.warmup_steps,
            freeze_b_pre: self.freeze_b_pre,
            log_every: self.log_every,
            ..TrainOptions::default()
        }
    }

    pub fn validate(&self) -> CliResult<()> {
        let mut problems = Vec::new();
        if self.batch == 0 {
            problems.push("--batch must be ≥ 1".to_string());
        }
        if !(self.lr_init > 0.0 && self.lr_init.is_finite()) {
            problems.push(format!("--lr-init must be positive, got {}", self.lr_init));
        }
        if !(self.lr_final >= 0.0 && self.lr_final <= self.lr_init) {
            problems.push(format!("--lr-final must be in [0, lr_init], got {}", self.lr_final));
        }
        if self.log_every == 0 {
            problems.push("--log-every must be ≥ 1".to_string());
        }
        if problems.is_empty() {
            Ok(())
        } else {
            Err(CliError::Validation(problems.join("; ")))
        }
    }
}

/// Checks `variant`/`k`/`p` and the derived encoder settings before any
/// compute starts.
pub fn validate_model(cfg: &EncoderConfig, p: usize) -> CliResult<()> {
    if p == 0 {
        return Err(CliError::Validation("--p must be ≥ 1".to_string()));
    }
    cfg.validate(p)
        .map_err(|e| CliError::Validation(format!("--variant {} --k {} --p {p}: {e}", cfg.variant, cfg.k)))
}

#[derive(Debug, Clone)]
pub struct Trained {
    pub dict: Dictionary,
    pub cfg: EncoderConfig,
    pub log: TrainLog,
    pub meta: CheckpointMeta,
}

/// The untrained dictionary `train` starts from for this seed.
pub fn init_dictionary(variant: Variant, p: usize, seed: u64, data: &Dataset) -> CliResult<Dictionary> {
    let mut rng = Rng::new(seed).fork(INIT_STREAM);
    Ok(Dictionary::init(data.m(), p, variant, data.mean().as_slice(), &mut rng)?)
}

/// Initializes a dictionary from `seed` and trains it on `data`.
pub fn train_model(h: &Hyper, variant: Variant, k: usize, p: usize, seed: u64, data: &Dataset) -> CliResult<Trained> {
    let cfg = h.encoder_config(variant, k, p);
    validate_model(&cfg, p)?;
    h.validate()?;
    let dict = init_dictionary(variant, p, seed, data)?;
    let (dict, log, state) = train(dict, &cfg, data.samples(), &h.train_options(seed))?;
    let meta = CheckpointMeta {
        seed,
        train_steps: state.step,
        epochs: h.epochs,
    };
    Ok(Trained { dict, cfg, log, meta })
}
