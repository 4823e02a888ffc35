// SPDX-License-Identifier: MIT OR Apache-2.0

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use clap::Args;
use serde::{Deserialize, Serialize};
use sparsedict_core::data::Dataset;
use sparsedict_core::encoder::SparseCode;
use sparsedict_core::metrics::{
    activation_stats, babel_curve, babel_curve_csv, coactivation_babel, r_squared, reconstruct, residual_curve,
    ActivationStats, BabelCurve, CoactOrder, DistributionSummary, SelectionOrder, UNDEFINED,
};
use sparsedict_core::{Dictionary, EncoderConfig, Variant};

use crate::args::{CommonFlags, DataFlags};
use crate::config::{self, parse_int_list};
use crate::error::{CliError, CliResult};
use crate::input;
use crate::output::{ensure_dir, write_file};

#[derive(Args, Serialize, Debug, Clone, Default)]
pub struct EvalFlags {
    #[command(flatten)]
    #[serde(flatten)]
    pub common: CommonFlags,
    #[command(flatten)]
    #[serde(flatten)]
    pub data: DataFlags,
    /// Checkpoint to evaluate
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub checkpoint: Option<PathBuf>,
    /// Inference sparsities for r2.csv, comma separated (default: training k)
    #[arg(long, value_delimiter = ',')]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub k: Option<Vec<usize>>,
    /// Inference sparsities for residual_curve.csv, `a..b` or a list
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub k_sweep: Option<String>,
    /// Babel orders for babel_dict.csv, `a..b` or a list
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub babel_orders: Option<String>,
    /// Fixed orders for babel_coact.csv in addition to |S|-1
    #[arg(long, value_delimiter = ',')]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub coact_orders: Option<Vec<usize>>,
}

#[derive(Serialize, Deserialize, Debug, Clone, PartialEq)]
#[serde(default)]
pub struct EvalConfig {
    pub seed: u64,
    pub out_dir: PathBuf,
    pub data: Option<PathBuf>,
    pub labels: Option<PathBuf>,
    pub limit: Option<usize>,
    pub checkpoint: Option<PathBuf>,
    pub k: Option<Vec<usize>>,
    pub k_sweep: Option<String>,
    pub babel_orders: Option<String>,
    pub coact_orders: Vec<usize>,
}

impl Default for EvalConfig {
    fn default() -> Self {
        EvalConfig {
            seed: 0,
            out_dir: PathBuf::from("out"),
            data: None,
            labels: None,
            limit: None,
            checkpoint: None,
            k: None,
            k_sweep: None,
            babel_orders: None,
            coact_orders: vec![1],
        }
    }
}

/// Which co-activation order a [`CoactRow`] summarizes.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum CoactLabel {
    SupportMinusOne,
    Fixed(usize),
}

#[derive(Debug, Clone, PartialEq)]
pub struct CoactRow {
    pub label: CoactLabel,
    /// `None` when no sample has enough active atoms.
    pub summary: Option<DistributionSummary>,
    pub skipped: usize,
}

/// Everything `eval` writes, in memory.
#[derive(Debug, Clone)]
pub struct EvalReport {
    /// `(k, R²)`; `k` is `None` for encoders without a sparsity knob.
    pub r2: Vec<(Option<usize>, f64)>,
    pub babel: BabelCurve,
    pub coact: Vec<CoactRow>,
    pub stats: ActivationStats,
    /// `(k, mean squared error)`; a single `None` row for ReLU/JumpReLU.
    pub residual: Vec<(Option<usize>, f64)>,
}

/// Evaluation grid resolved against a concrete model.
#[derive(Debug, Clone, PartialEq)]
pub struct EvalPlan {
    pub r2_ks: Vec<usize>,
    pub sweep_ks: Vec<usize>,
    pub babel_orders: Vec<usize>,
    pub coact_orders: Vec<usize>,
}

impl EvalPlan {
    pub fn resolve(cfg: &EvalConfig, enc: &EncoderConfig, p: usize) -> CliResult<Self> {
        let r2_ks = cfg.k.clone().unwrap_or_else(|| vec![enc.k]);
        let default_max = match enc.variant {
            Variant::Mp => 8 * enc.k,
            _ => (8 * enc.k).min(p),
        }
        .max(1);
        let sweep_ks = match &cfg.k_sweep {
            Some(s) => parse_int_list(s)?,
            None => (1..=default_max).collect(),
        };
        let babel_orders = match &cfg.babel_orders {
            Some(s) => parse_int_list(s)?,
            None => (1..=p.saturating_sub(1).min(32)).collect(),
        };
        let plan = EvalPlan {
            r2_ks,
            sweep_ks,
            babel_orders,
            coact_orders: cfg.coact_orders.clone(),
        };
        plan.validate(enc.variant, p)?;
        Ok(plan)
    }

    fn validate(&self, variant: Variant, p: usize) -> CliResult<()> {
        let bad = |flag: &str, what: String| Err(CliError::Validation(format!("{flag}: {what}")));
        for (flag, ks) in [("--k", &self.r2_ks), ("--k-sweep", &self.sweep_ks)] {
            if ks.is_empty() {
                return bad(flag, "no values given".to_string());
            }
            if ks.contains(&0) {
                return bad(flag, "k ≥ 1 required".to_string());
            }
            if matches!(variant, Variant::TopK | Variant::BatchTopK) {
                if let Some(k) = ks.iter().find(|&&k| k > p) {
                    return bad(flag, format!("k = {k} exceeds atom count p = {p}"));
                }
            }
        }
        if let Some(r) = self.babel_orders.iter().find(|&&r| r == 0 || r >= p) {
            return bad("--babel-orders", format!("order {r} must be in 1..p-1 (p = {p})"));
        }
        if self.coact_orders.contains(&0) {
            return bad("--coact-orders", "orders must be ≥ 1".to_string());
        }
        Ok(())
    }
}

pub fn execute(flags: &EvalFlags) -> CliResult<()> {
    let cfg: EvalConfig = config::resolve(flags.common.config.as_deref(), flags)?;
    let report = run(&cfg)?;
    for (k, r2) in &report.r2 {
        println!("k = {}: R² = {r2}", k.map_or(UNDEFINED.to_string(), |k| k.to_string()));
    }
    Ok(())
}

pub fn run(cfg: &EvalConfig) -> CliResult<EvalReport> {
    let (dict, enc, _) = super::open_checkpoint(super::required(&cfg.checkpoint, "--checkpoint")?)?;
    let plan = EvalPlan::resolve(cfg, &enc, dict.p())?;
    let data = input::load(super::required(&cfg.data, "--data")?, cfg.labels.as_deref(), cfg.limit)?;
    super::check_dims(&dict, &data)?;
    let report = evaluate(&dict, &enc, &data, &plan)?;
    write_report(&cfg.out_dir, &report)?;
    config::echo(&cfg.out_dir, "eval", cfg)?;
    Ok(report)
}

fn coact_row(codes: &[SparseCode], d: &sparsedict_core::DenseMatrix, label: CoactLabel) -> CliResult<CoactRow> {
    let (order, need) = match label {
        CoactLabel::SupportMinusOne => (CoactOrder::SupportMinusOne, 2),
        CoactLabel::Fixed(r) => (CoactOrder::Fixed(r), r + 1),
    };
    let eligible = codes.iter().filter(|c| c.support().len() >= need).count();
    if eligible == 0 {
        return Ok(CoactRow {
            label,
            summary: None,
            skipped: codes.len(),
        });
    }
    let summary = coactivation_babel(codes, d, order)?;
    Ok(CoactRow {
        label,
        skipped: summary.skipped,
        summary: Some(summary),
    })
}

/// Computes every eval metric of `dict` on `data`.
pub fn evaluate(dict: &Dictionary, enc: &EncoderConfig, data: &Dataset, plan: &EvalPlan) -> CliResult<EvalReport> {
    let x = data.samples();
    let uses_k = enc.variant.uses_k();

    let mut r2 = Vec::new();
    let mut train_codes = None;
    let ks: Vec<Option<usize>> = if uses_k {
        plan.r2_ks.iter().map(|&k| Some(k)).collect()
    } else {
        vec![None]
    };
    for k in ks {
        let (xhat, codes) = reconstruct(dict, enc, x, k)?;
        r2.push((k, r_squared(x, &xhat)?));
        if k.is_none() || k == Some(enc.k) {
            train_codes = Some(codes);
        }
    }
    let codes = match train_codes {
        Some(c) => c,
        None => reconstruct(dict, enc, x, None)?.1,
    };

    let babel = if plan.babel_orders.is_empty() {
        BabelCurve {
            orders: Vec::new(),
            values: Vec::new(),
        }
    } else {
        babel_curve(&dict.d, &plan.babel_orders)?
    };

    let mut coact = vec![coact_row(&codes, &dict.d, CoactLabel::SupportMinusOne)?];
    for &r in &plan.coact_orders {
        coact.push(coact_row(&codes, &dict.d, CoactLabel::Fixed(r))?);
    }

    let stats = activation_stats(&codes, dict.p(), SelectionOrder::for_variant(enc.variant))?;

    let residual = if uses_k {
        let k_max = *plan.sweep_ks.iter().max().expect("validated nonempty");
        let curve = residual_curve(dict, enc, x, k_max)?;
        plan.sweep_ks.iter().map(|&k| (Some(k), curve[k - 1])).collect()
    } else {
        vec![(None, residual_curve(dict, enc, x, 1)?[0])]
    };

    Ok(EvalReport {
        r2,
        babel,
        coact,
        stats,
        residual,
    })
}

fn k_cell(k: Option<usize>) -> String {
    k.map_or(UNDEFINED.to_string(), |k| k.to_string())
}

pub fn r2_csv(rows: &[(Option<usize>, f64)]) -> String {
    let mut s = String::from("k,r2\n");
    for (k, v) in rows {
        let _ = writeln!(s, "{},{v}", k_cell(*k));
    }
    s
}

pub fn residual_csv(rows: &[(Option<usize>, f64)]) -> String {
    let mut s = String::from("k,mean_err\n");
    for (k, v) in rows {
        let _ = writeln!(s, "{},{v}", k_cell(*k));
    }
    s
}

pub const COACT_HEADER: &str = "order,mean,max,q05,q25,q50,q75,q95,evaluated,skipped";

pub fn coact_csv(rows: &[CoactRow]) -> String {
    let mut s = String::from(COACT_HEADER);
    s.push('\n');
    for row in rows {
        let label = match row.label {
            CoactLabel::SupportMinusOne => "support-1".to_string(),
            CoactLabel::Fixed(r) => r.to_string(),
        };
        match &row.summary {
            Some(d) => {
                let q = d.quantiles;
                let _ = writeln!(
                    s,
                    "{label},{},{},{},{},{},{},{},{},{}",
                    d.mean, d.max, q[0], q[1], q[2], q[3], q[4], d.evaluated, d.skipped
                );
            }
            None => {
                let na = UNDEFINED;
                let _ = writeln!(s, "{label},{na},{na},{na},{na},{na},{na},{na},0,{}", row.skipped);
            }
        }
    }
    s
}

pub fn write_report(out_dir: &Path, report: &EvalReport) -> CliResult<()> {
    ensure_dir(out_dir)?;
    write_file(&out_dir.join("r2.csv"), r2_csv(&report.r2).as_bytes())?;
    write_file(&out_dir.join("babel_dict.csv"), babel_curve_csv(&report.babel).as_bytes())?;
    write_file(&out_dir.join("babel_coact.csv"), coact_csv(&report.coact).as_bytes())?;
    write_file(&out_dir.join("activation_stats.csv"), report.stats.to_csv().as_bytes())?;
    write_file(&out_dir.join("residual_curve.csv"), residual_csv(&report.residual).as_bytes())?;
    Ok(())
}
