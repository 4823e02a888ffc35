// SPDX-License-Identifier: MIT OR Apache-2.0

use std::fmt::Write as _;
use std::path::PathBuf;

use clap::Args;
use serde::{Deserialize, Serialize};
use sparsedict_core::encoder::{encode_batch, encode_mp, MpOptions};
use sparsedict_core::linalg::norm;
use sparsedict_core::metrics::UNDEFINED;
use sparsedict_core::{Dictionary, EncoderConfig, Variant};

use crate::args::{CommonFlags, DataFlags};
use crate::config;
use crate::error::{CliError, CliResult};
use crate::input;
use crate::output::{ensure_dir, strip, write_file};

#[derive(Args, Serialize, Debug, Clone, Default)]
pub struct InspectFlags {
    #[command(flatten)]
    #[serde(flatten)]
    pub common: CommonFlags,
    #[command(flatten)]
    #[serde(flatten)]
    pub data: DataFlags,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub checkpoint: Option<PathBuf>,
    /// Sample indices, comma separated
    #[arg(long, value_delimiter = ',')]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub samples: Option<Vec<usize>>,
    /// Inference sparsity / MP steps (default: training k)
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub steps: Option<usize>,
}

#[derive(Serialize, Deserialize, Debug, Clone, PartialEq)]
#[serde(default)]
pub struct InspectConfig {
    pub seed: u64,
    pub out_dir: PathBuf,
    pub data: Option<PathBuf>,
    pub labels: Option<PathBuf>,
    pub limit: Option<usize>,
    pub checkpoint: Option<PathBuf>,
    pub samples: Vec<usize>,
    pub steps: Option<usize>,
}

impl Default for InspectConfig {
    fn default() -> Self {
        InspectConfig {
            seed: 0,
            out_dir: PathBuf::from("out"),
            data: None,
            labels: None,
            limit: None,
            checkpoint: None,
            samples: vec![0],
            steps: None,
        }
    }
}

/// Sequential view of one encoding.
#[derive(Debug, Clone, PartialEq)]
pub struct Trace {
    /// `x̂⁽⁰⁾ = b_pre, x̂⁽¹⁾, …`
    pub partials: Vec<Vec<f64>>,
    /// `(atom, coefficient)` added at steps `1..`.
    pub steps: Vec<(usize, f64)>,
    /// `‖x − x̂⁽ᵗ⁾‖` for every partial.
    pub residual_norms: Vec<f64>,
}

/// MP traces follow the iterations; shallow codes are replayed one atom at a
/// time by descending coefficient.
pub fn trace(dict: &Dictionary, enc: &EncoderConfig, x: &[f64], steps: Option<usize>) -> CliResult<Trace> {
    if enc.variant == Variant::Mp {
        let opts = MpOptions {
            selection: enc.mp_selection,
            record_partials: true,
        };
        let (code, tr) = encode_mp(dict, x, steps.unwrap_or(enc.k), opts)?;
        let partials = tr
            .partial_reconstructions
            .expect("requested")
            .into_iter()
            .map(|v| v.into_vec())
            .collect();
        return Ok(Trace {
            partials,
            steps: code.active().to_vec(),
            residual_norms: tr.residual_norms,
        });
    }
    let code = encode_batch(dict, enc, &[x], steps)?.remove(0);
    let order = code.by_descending_value();
    let mut xhat = dict.b_pre.as_slice().to_vec();
    let residual = |xhat: &[f64]| norm(&x.iter().zip(xhat).map(|(a, b)| a - b).collect::<Vec<_>>());
    let mut partials = vec![xhat.clone()];
    let mut residual_norms = vec![residual(&xhat)];
    for &(j, z) in &order {
        dict.d.add_scaled_column(j, z, &mut xhat);
        residual_norms.push(residual(&xhat));
        partials.push(xhat.clone());
    }
    Ok(Trace {
        partials,
        steps: order,
        residual_norms,
    })
}

pub fn trace_csv(t: &Trace) -> String {
    let mut s = String::from("step,atom,coefficient,residual_norm\n");
    let _ = writeln!(s, "0,{UNDEFINED},{UNDEFINED},{}", t.residual_norms[0]);
    for (i, (j, z)) in t.steps.iter().enumerate() {
        let _ = writeln!(s, "{},{j},{z},{}", i + 1, t.residual_norms[i + 1]);
    }
    s
}

pub fn execute(flags: &InspectFlags) -> CliResult<()> {
    let cfg: InspectConfig = config::resolve(flags.common.config.as_deref(), flags)?;
    let traces = run(&cfg)?;
    for (i, t) in cfg.samples.iter().zip(&traces) {
        println!(
            "sample {i}: {} steps, residual {} -> {}",
            t.steps.len(),
            t.residual_norms[0],
            t.residual_norms.last().expect("nonempty")
        );
    }
    Ok(())
}

/// Writes `trace_{i}.pgm` and `trace_{i}.csv` for each requested sample.
pub fn run(cfg: &InspectConfig) -> CliResult<Vec<Trace>> {
    if cfg.samples.is_empty() {
        return Err(CliError::Validation("--samples needs at least one index".to_string()));
    }
    if cfg.steps == Some(0) {
        return Err(CliError::Validation("--steps: k ≥ 1 required".to_string()));
    }
    let (dict, enc, _) = super::open_checkpoint(super::required(&cfg.checkpoint, "--checkpoint")?)?;
    let data = input::load(super::required(&cfg.data, "--data")?, cfg.labels.as_deref(), cfg.limit)?;
    super::check_dims(&dict, &data)?;
    if let Some(&i) = cfg.samples.iter().find(|&&i| i >= data.n()) {
        return Err(CliError::Validation(format!(
            "--samples: index {i} out of range for {} samples",
            data.n()
        )));
    }
    ensure_dir(&cfg.out_dir)?;
    let mut traces = Vec::with_capacity(cfg.samples.len());
    for &i in &cfg.samples {
        let t = trace(&dict, &enc, data.row(i), cfg.steps)?;
        write_file(&cfg.out_dir.join(format!("trace_{i}.pgm")), &strip(&t.partials).to_pgm())?;
        write_file(&cfg.out_dir.join(format!("trace_{i}.csv")), trace_csv(&t).as_bytes())?;
        traces.push(t);
    }
    config::echo(&cfg.out_dir, "inspect", cfg)?;
    Ok(traces)
}
