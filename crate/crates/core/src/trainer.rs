// SPDX-License-Identifier: MIT OR Apache-2.0

//! Losses, hand-derived gradients and the optimization loop.
//!
//! The per-sample objective is
//!
//! ```text
//! L = ‖x − x̂‖² + λ·R(z) + α·L_aux
//! ```
//!
//! averaged over the batch. `R` is `ℓ₁` for ReLU, a straight-through `ℓ₀`
//! count for JumpReLU and zero otherwise. `L_aux` reconstructs the residual
//! `e = x − x̂` from the most strongly activated dead atoms.
//!
//! Gradients are exact reverse-mode derivatives with discrete choices
//! (ReLU kinks, TopK masks, MP selections) held fixed. For MP the whole
//! unrolled graph is differentiated: every coefficient `z⁽ᵗ⁾ = D_jᵀ r⁽ᵗ⁻¹⁾`
//! depends on `D_j` and, through `r⁽ᵗ⁻¹⁾`, on every earlier step and on
//! `b_pre`.

use std::fmt::Write as _;
use std::path::Path;

use crate::dictionary::{Dictionary, EncoderConfig, MpSelection, Variant};
use crate::encoder::{self, batch_top_k_positive, top_k_positive};
use crate::error::{Error, Result};
use crate::linalg::{axpy_in_place, norm_sq, DenseMatrix, DenseVector};
use crate::rng::Rng;

/// Batch-averaged loss terms.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct LossBreakdown {
    pub recon: f64,
    pub sparsity_penalty: f64,
    pub aux: f64,
    pub total: f64,
    /// Mean number of distinct active atoms per sample.
    pub l0: f64,
}

/// Gradients with the shapes of their parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct GradientSet {
    pub d: DenseMatrix,
    pub b_pre: DenseVector,
    pub w: Option<DenseMatrix>,
    pub b: Option<DenseVector>,
    pub theta: Option<DenseVector>,
}

impl GradientSet {
    /// All-zero gradients shaped like `dict`.
    pub fn zeros_like(dict: &Dictionary) -> Self {
        let (m, p) = dict.d.shape();
        Self {
            d: DenseMatrix::zeros(m, p),
            b_pre: DenseVector::zeros(m),
            w: dict.encoder_weights.as_ref().map(|_| DenseMatrix::zeros(m, p)),
            b: dict.encoder_bias.as_ref().map(|_| DenseVector::zeros(p)),
            theta: dict.thresholds.as_ref().map(|_| DenseVector::zeros(p)),
        }
    }

    fn slices(&self) -> Vec<&[f64]> {
        let mut v: Vec<&[f64]> = vec![self.d.as_slice(), self.b_pre.as_slice()];
        v.extend(self.w.as_ref().map(|w| w.as_slice()));
        v.extend(self.b.as_ref().map(|b| b.as_slice()));
        v.extend(self.theta.as_ref().map(|t| t.as_slice()));
        v
    }

    fn slices_mut(&mut self) -> Vec<&mut [f64]> {
        let mut v: Vec<&mut [f64]> = vec![self.d.as_mut_slice(), self.b_pre.as_mut_slice()];
        v.extend(self.w.as_mut().map(|w| w.as_mut_slice()));
        v.extend(self.b.as_mut().map(|b| b.as_mut_slice()));
        v.extend(self.theta.as_mut().map(|t| t.as_mut_slice()));
        v
    }

    pub fn is_finite(&self) -> bool {
        self.slices().iter().all(|s| s.iter().all(|v| v.is_finite()))
    }

    /// Largest absolute entry over all tensors.
    pub fn max_abs(&self) -> f64 {
        self.slices()
            .iter()
            .flat_map(|s| s.iter())
            .fold(0.0, |a, v| a.max(v.abs()))
    }
}

fn dict_slices_mut(dict: &mut Dictionary) -> Vec<&mut [f64]> {
    let mut v: Vec<&mut [f64]> = vec![dict.d.as_mut_slice(), dict.b_pre.as_mut_slice()];
    v.extend(dict.encoder_weights.as_mut().map(|w| w.as_mut_slice()));
    v.extend(dict.encoder_bias.as_mut().map(|b| b.as_mut_slice()));
    v.extend(dict.thresholds.as_mut().map(|t| t.as_mut_slice()));
    v
}

/// Learning-rate schedule: linear warmup from 0, then cosine decay.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Schedule {
    pub lr_init: f64,
    pub lr_final: f64,
    pub warmup_steps: u64,
    pub total_steps: u64,
}

impl Schedule {
    /// Adam with `5·10⁻⁴` decayed to `10⁻⁶`.
    pub fn cosine(warmup_steps: u64, total_steps: u64) -> Self {
        Self {
            lr_init: 5e-4,
            lr_final: 1e-6,
            warmup_steps,
            total_steps,
        }
    }
}

pub fn lr_at(step: u64, s: &Schedule) -> f64 {
    if step < s.warmup_steps {
        return s.lr_init * step as f64 / s.warmup_steps as f64;
    }
    if step >= s.total_steps {
        return s.lr_final;
    }
    let span = (s.total_steps - s.warmup_steps) as f64;
    let progress = (step - s.warmup_steps) as f64 / span;
    s.lr_final + 0.5 * (s.lr_init - s.lr_final) * (1.0 + (std::f64::consts::PI * progress).cos())
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdamHyper {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamHyper {
    fn default() -> Self {
        Self {
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// Optimizer and bookkeeping state carried across batches.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainState {
    pub first_moment: GradientSet,
    pub second_moment: GradientSet,
    /// Number of optimizer steps taken.
    pub step: u64,
    /// Optimizer steps since each atom was last active.
    pub usage: Vec<u64>,
    pub schedule: Schedule,
    /// Leave `b_pre` untouched by the optimizer.
    pub freeze_b_pre: bool,
}

impl TrainState {
    pub fn new(dict: &Dictionary, schedule: Schedule) -> Self {
        Self {
            first_moment: GradientSet::zeros_like(dict),
            second_moment: GradientSet::zeros_like(dict),
            step: 0,
            usage: vec![0; dict.p()],
            schedule,
            freeze_b_pre: false,
        }
    }

    /// Atoms idle for more than `threshold` steps.
    pub fn dead_mask(&self, threshold: u64) -> Vec<bool> {
        self.usage.iter().map(|&u| u > threshold).collect()
    }

    /// Resets counters of atoms active in the last batch, ages the rest.
    pub fn record_activity(&mut self, active: &[bool]) {
        for (u, &a) in self.usage.iter_mut().zip(active) {
            *u = if a { 0 } else { u.saturating_add(1) };
        }
    }
}

/// One Adam update at the scheduled learning rate, followed by decoder
/// renormalization and threshold projection.
pub fn adam_step(
    state: &mut TrainState,
    dict: &mut Dictionary,
    grads: &GradientSet,
    hyper: &AdamHyper,
) -> Result<()> {
    let shapes_match = |a: &GradientSet, d: &Dictionary| {
        a.d.shape() == d.d.shape()
            && a.b_pre.len() == d.b_pre.len()
            && a.w.as_ref().map(|w| w.shape()) == d.encoder_weights.as_ref().map(|w| w.shape())
            && a.b.as_ref().map(|b| b.len()) == d.encoder_bias.as_ref().map(|b| b.len())
            && a.theta.as_ref().map(|t| t.len()) == d.thresholds.as_ref().map(|t| t.len())
    };
    if !shapes_match(grads, dict) || !shapes_match(&state.first_moment, dict) {
        return Err(Error::DimensionMismatch {
            op: "adam_step",
            left: dict.d.shape(),
            right: grads.d.shape(),
        });
    }
    let t = state.step + 1;
    let lr = lr_at(t, &state.schedule);
    let bc1 = 1.0 - hyper.beta1.powi(t.min(i32::MAX as u64) as i32);
    let bc2 = 1.0 - hyper.beta2.powi(t.min(i32::MAX as u64) as i32);
    let freeze = state.freeze_b_pre;
    let params = dict_slices_mut(dict);
    let g = grads.slices();
    let m1 = state.first_moment.slices_mut();
    let m2 = state.second_moment.slices_mut();
    for (idx, (((p, g), m), v)) in params.into_iter().zip(g).zip(m1).zip(m2).enumerate() {
        // slot 1 is b_pre
        if idx == 1 && freeze {
            continue;
        }
        for i in 0..p.len() {
            m[i] = hyper.beta1 * m[i] + (1.0 - hyper.beta1) * g[i];
            v[i] = hyper.beta2 * v[i] + (1.0 - hyper.beta2) * g[i] * g[i];
            let mhat = m[i] / bc1;
            let vhat = v[i] / bc2;
            p[i] -= lr * mhat / (vhat.sqrt() + hyper.eps);
        }
    }
    state.step = t;
    dict.renormalize_columns();
    dict.project_thresholds();
    Ok(())
}

/// Loss, gradients and the set of atoms used by a batch.
#[derive(Debug, Clone)]
pub struct BatchResult {
    pub loss: LossBreakdown,
    pub grads: GradientSet,
    /// Atoms active in at least one sample.
    pub active: Vec<bool>,
}

/// Loss and exact gradients of the batch-mean objective.
///
/// `dead` marks atoms eligible for the auxiliary loss; pass `None` when no
/// atom is dead.
pub fn loss_and_gradients<X: AsRef<[f64]>>(
    dict: &Dictionary,
    cfg: &EncoderConfig,
    batch: &[X],
    dead: Option<&[bool]>,
) -> Result<(LossBreakdown, GradientSet)> {
    evaluate_batch(dict, cfg, batch, dead).map(|r| (r.loss, r.grads))
}

pub fn evaluate_batch<X: AsRef<[f64]>>(
    dict: &Dictionary,
    cfg: &EncoderConfig,
    batch: &[X],
    dead: Option<&[bool]>,
) -> Result<BatchResult> {
    if batch.is_empty() {
        return Err(Error::InvalidArgument("empty batch".to_string()));
    }
    let (m, p) = dict.d.shape();
    if let Some(x) = batch.iter().find(|x| x.as_ref().len() != m) {
        return Err(Error::DimensionMismatch {
            op: "loss_and_gradients",
            left: (m, p),
            right: (x.as_ref().len(), 1),
        });
    }
    if let Some(dead) = dead {
        if dead.len() != p {
            return Err(Error::DimensionMismatch {
                op: "loss_and_gradients",
                left: (m, p),
                right: (dead.len(), 1),
            });
        }
    }
    let use_aux = cfg.aux_alpha > 0.0 && dead.is_some_and(|d| d.iter().any(|&x| x));
    let dead = if use_aux { dead } else { None };

    let mut acc = Accum {
        grads: GradientSet::zeros_like(dict),
        loss: LossBreakdown::default(),
        active: vec![false; p],
        scale: 1.0 / batch.len() as f64,
    };
    match cfg.variant {
        Variant::Mp => {
            for (i, x) in batch.iter().enumerate() {
                mp_sample(dict, cfg, x.as_ref(), dead, &mut acc)
                    .map_err(|e| with_sample(e, i))?;
            }
        }
        _ => shallow_batch(dict, cfg, batch, dead, &mut acc)?,
    }
    let mut loss = acc.loss;
    loss.total = loss.recon + loss.sparsity_penalty + loss.aux;
    if !loss.total.is_finite() {
        return Err(Error::NonFinite {
            context: "batch loss".to_string(),
        });
    }
    Ok(BatchResult {
        loss,
        grads: acc.grads,
        active: acc.active,
    })
}

fn with_sample(e: Error, i: usize) -> Error {
    match e {
        Error::NonFinite { context } => Error::NonFinite {
            context: format!("{context} (batch sample {i})"),
        },
        other => other,
    }
}

struct Accum {
    grads: GradientSet,
    loss: LossBreakdown,
    active: Vec<bool>,
    scale: f64,
}

/// Dead atoms for the auxiliary loss: the `aux_k` largest positive scores
/// among dead atoms not already in `exclude`.
fn aux_selection(scores: &[f64], dead: &[bool], exclude: &[usize], aux_k: usize) -> Vec<usize> {
    let masked: Vec<f64> = scores
        .iter()
        .zip(dead)
        .enumerate()
        .map(|(j, (&s, &d))| if d && !exclude.contains(&j) { s } else { 0.0 })
        .collect();
    top_k_positive(&masked, aux_k)
}

fn shallow_batch<X: AsRef<[f64]>>(
    dict: &Dictionary,
    cfg: &EncoderConfig,
    batch: &[X],
    dead: Option<&[bool]>,
    acc: &mut Accum,
) -> Result<()> {
    let w = dict
        .encoder_weights
        .as_ref()
        .ok_or_else(|| Error::InvalidArgument("shallow variant requires encoder weights".into()))?;
    let us = batch
        .iter()
        .map(|x| encoder::pre_activations(dict, x.as_ref()))
        .collect::<Result<Vec<_>>>()?;
    let masks: Vec<Vec<usize>> = match cfg.variant {
        Variant::Relu => us
            .iter()
            .map(|u| (0..u.len()).filter(|&j| u[j] > 0.0).collect())
            .collect(),
        Variant::JumpRelu => {
            let theta = dict
                .thresholds
                .as_ref()
                .ok_or_else(|| Error::InvalidArgument("jumprelu requires thresholds".into()))?;
            us.iter()
                .map(|u| (0..u.len()).filter(|&j| u[j] > theta[j]).collect())
                .collect()
        }
        Variant::TopK => us.iter().map(|u| top_k_positive(u, cfg.k)).collect(),
        Variant::BatchTopK => batch_top_k_positive(&us, cfg.k),
        Variant::Mp => unreachable!("handled by mp_sample"),
    };
    let m = dict.m();
    let s = acc.scale;
    let mut du = vec![0.0; dict.p()];
    for (i, ((x, u), active)) in batch.iter().zip(&us).zip(&masks).enumerate() {
        let x = x.as_ref();
        let xc = encoder::centered(dict, x);
        let mut xhat = dict.b_pre.as_slice().to_vec();
        for &j in active {
            dict.d.add_scaled_column(j, u[j], &mut xhat);
            acc.active[j] = true;
        }
        let e: Vec<f64> = x.iter().zip(&xhat).map(|(a, b)| a - b).collect();
        let recon = norm_sq(&e);
        if !recon.is_finite() {
            return Err(Error::NonFinite {
                context: format!("reconstruction loss (batch sample {i})"),
            });
        }
        acc.loss.recon += s * recon;
        acc.loss.l0 += s * active.len() as f64;

        // dL/dx̂ for the reconstruction term.
        let mut g_xhat: Vec<f64> = e.iter().map(|v| -2.0 * s * v).collect();

        let aux_atoms = match dead {
            Some(dead) => aux_selection(u, dead, active, cfg.aux_k),
            None => Vec::new(),
        };
        let mut g_ehat = Vec::new();
        if !aux_atoms.is_empty() {
            let mut ehat = vec![0.0; m];
            for &j in &aux_atoms {
                dict.d.add_scaled_column(j, u[j], &mut ehat);
            }
            let q: Vec<f64> = e.iter().zip(&ehat).map(|(a, b)| a - b).collect();
            acc.loss.aux += s * cfg.aux_alpha * norm_sq(&q);
            g_ehat = q.iter().map(|v| -2.0 * s * cfg.aux_alpha * v).collect();
            axpy_in_place(1.0, &g_ehat, &mut g_xhat);
        }

        du.fill(0.0);
        for &j in active {
            let dz = dict.d.column_dot(j, &g_xhat);
            du[j] = match cfg.variant {
                Variant::Relu => {
                    acc.loss.sparsity_penalty += s * cfg.lambda * u[j];
                    dz + s * cfg.lambda
                }
                _ => dz,
            };
            add_column(&mut acc.grads.d, j, u[j], &g_xhat);
        }
        for &j in &aux_atoms {
            du[j] += dict.d.column_dot(j, &g_ehat);
            add_column(&mut acc.grads.d, j, u[j], &g_ehat);
        }

        if cfg.variant == Variant::JumpRelu {
            let theta = dict.thresholds.as_ref().expect("checked above");
            let g_theta = acc.grads.theta.as_mut().expect("shaped like dict");
            acc.loss.sparsity_penalty += s * cfg.target_l0 * active.len() as f64;
            let eps = cfg.ste_bandwidth;
            for j in 0..u.len() {
                // rectangular kernel K(v) = 1[|v| < 1/2] on v = (u − θ)/ε
                if ((u[j] - theta[j]) / eps).abs() < 0.5 {
                    let dz = dict.d.column_dot(j, &g_xhat);
                    g_theta[j] += -(theta[j] / eps) * dz - s * cfg.target_l0 / eps;
                }
            }
        }

        // Encoder: u = Wᵀ(x − b_pre) + b.
        let gb = acc.grads.b.as_mut().expect("shallow");
        let gw = acc.grads.w.as_mut().expect("shallow");
        for (j, &d) in du.iter().enumerate() {
            if d == 0.0 {
                continue;
            }
            gb[j] += d;
            add_column(gw, j, d, &xc);
            // b_pre enters u with a minus sign
            w.add_scaled_column(j, -d, acc.grads.b_pre.as_mut_slice());
        }
        axpy_in_place(1.0, &g_xhat, acc.grads.b_pre.as_mut_slice());
    }
    Ok(())
}

/// `M[:, j] += alpha · v`.
fn add_column(mat: &mut DenseMatrix, j: usize, alpha: f64, v: &[f64]) {
    let cols = mat.cols();
    let data = mat.as_mut_slice();
    for (i, vi) in v.iter().enumerate() {
        data[i * cols + j] += alpha * vi;
    }
}

fn mp_sample(
    dict: &Dictionary,
    cfg: &EncoderConfig,
    x: &[f64],
    dead: Option<&[bool]>,
    acc: &mut Accum,
) -> Result<()> {
    let s = acc.scale;
    let run = encoder::mp_run(dict, x, cfg.k, cfg.mp_selection, true)?;
    let r_final = run.final_residual();
    let recon = norm_sq(r_final);
    if !recon.is_finite() {
        return Err(Error::NonFinite {
            context: "reconstruction loss".to_string(),
        });
    }
    acc.loss.recon += s * recon;
    let mut distinct = run.selected.clone();
    distinct.sort_unstable();
    distinct.dedup();
    acc.loss.l0 += s * distinct.len() as f64;
    for &j in &distinct {
        acc.active[j] = true;
    }

    // x − x̂ = r⁽ᵀ⁾, so dL/dr⁽ᵀ⁾ = 2 r⁽ᵀ⁾.
    let mut g_r: Vec<f64> = r_final.iter().map(|v| 2.0 * s * v).collect();

    if let Some(dead) = dead {
        let e = r_final;
        let corr = dict.d.matvec_transposed(e)?;
        let scores: Vec<f64> = match cfg.mp_selection {
            MpSelection::Signed => corr.to_vec(),
            MpSelection::Absolute => corr.iter().map(|c| c.abs()).collect(),
        };
        let aux_atoms = aux_selection(&scores, dead, &distinct, cfg.aux_k);
        if !aux_atoms.is_empty() {
            let mut q = e.to_vec();
            for &j in &aux_atoms {
                dict.d.add_scaled_column(j, -corr[j], &mut q);
            }
            acc.loss.aux += s * cfg.aux_alpha * norm_sq(&q);
            // L_aux = ‖e − Σ (D_jᵀe) D_j‖²
            let g_q: Vec<f64> = q.iter().map(|v| 2.0 * s * cfg.aux_alpha * v).collect();
            axpy_in_place(1.0, &g_q, &mut g_r);
            for &j in &aux_atoms {
                let g_z = -dict.d.column_dot(j, &g_q);
                add_column(&mut acc.grads.d, j, -corr[j], &g_q);
                add_column(&mut acc.grads.d, j, g_z, e);
                dict.d.add_scaled_column(j, g_z, &mut g_r);
            }
        }
    }

    // Reverse through r⁽ᵗ⁾ = r⁽ᵗ⁻¹⁾ − z⁽ᵗ⁾ D_j with z⁽ᵗ⁾ = D_jᵀ r⁽ᵗ⁻¹⁾.
    for t in (0..run.selected.len()).rev() {
        let j = run.selected[t];
        let z = run.coeffs[t];
        let r_prev = &run.residuals[t];
        let g_z = -dict.d.column_dot(j, &g_r);
        add_column(&mut acc.grads.d, j, -z, &g_r);
        add_column(&mut acc.grads.d, j, g_z, r_prev);
        if !cfg.detach_residual {
            dict.d.add_scaled_column(j, g_z, &mut g_r);
        }
    }
    // r⁽⁰⁾ = x − b_pre
    axpy_in_place(-1.0, &g_r, acc.grads.b_pre.as_mut_slice());
    Ok(())
}

/// Options for [`train`].
#[derive(Debug, Clone, PartialEq)]
pub struct TrainOptions {
    pub epochs: usize,
    pub batch_size: usize,
    pub seed: u64,
    pub lr_init: f64,
    pub lr_final: f64,
    /// Warmup length in steps; `None` means one epoch.
    pub warmup_steps: Option<u64>,
    pub adam: AdamHyper,
    pub freeze_b_pre: bool,
    /// Record a log row every this many optimizer steps.
    pub log_every: u64,
}

impl Default for TrainOptions {
    fn default() -> Self {
        Self {
            epochs: 50,
            batch_size: 256,
            seed: 0,
            lr_init: 5e-4,
            lr_final: 1e-6,
            warmup_steps: None,
            adam: AdamHyper::default(),
            freeze_b_pre: false,
            log_every: 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LogRecord {
    pub step: u64,
    pub epoch: usize,
    pub lr: f64,
    pub loss: LossBreakdown,
    pub dead_atoms: usize,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct TrainLog {
    pub records: Vec<LogRecord>,
    /// Sample-weighted mean reconstruction loss of each epoch.
    pub epoch_recon: Vec<f64>,
}

pub const LOG_HEADER: &str = "step,epoch,lr,recon,sparsity_penalty,aux,total,mean_l0,dead_atoms";

impl TrainLog {
    pub fn to_csv(&self) -> String {
        let mut out = String::from(LOG_HEADER);
        out.push('\n');
        for r in &self.records {
            let _ = writeln!(
                out,
                "{},{},{},{},{},{},{},{},{}",
                r.step,
                r.epoch,
                r.lr,
                r.loss.recon,
                r.loss.sparsity_penalty,
                r.loss.aux,
                r.loss.total,
                r.loss.l0,
                r.dead_atoms
            );
        }
        out
    }

    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_csv()).map_err(|e| Error::io(path, e))
    }
}

/// Number of optimizer steps per epoch for `n` samples.
pub fn steps_per_epoch(n: usize, batch_size: usize) -> u64 {
    n.div_ceil(batch_size.max(1)) as u64
}

/// Runs `opts.epochs` of seeded minibatch training over the rows of
/// `samples`.
pub fn train(
    mut dict: Dictionary,
    cfg: &EncoderConfig,
    samples: &DenseMatrix,
    opts: &TrainOptions,
) -> Result<(Dictionary, TrainLog, TrainState)> {
    let n = samples.rows();
    if n == 0 {
        return Err(Error::InvalidArgument("training set is empty".to_string()));
    }
    if samples.cols() != dict.m() {
        return Err(Error::DimensionMismatch {
            op: "train",
            left: dict.d.shape(),
            right: samples.shape(),
        });
    }
    if opts.batch_size == 0 {
        return Err(Error::InvalidArgument("batch size must be ≥ 1".to_string()));
    }
    cfg.validate(dict.p())?;
    let per_epoch = steps_per_epoch(n, opts.batch_size);
    let schedule = Schedule {
        lr_init: opts.lr_init,
        lr_final: opts.lr_final,
        warmup_steps: opts.warmup_steps.unwrap_or(per_epoch),
        total_steps: per_epoch * opts.epochs as u64,
    };
    let mut state = TrainState::new(&dict, schedule);
    state.freeze_b_pre = opts.freeze_b_pre;
    let mut log = TrainLog::default();
    let mut rng = Rng::new(opts.seed).fork(0x7261_696e);
    let mut order: Vec<usize> = (0..n).collect();

    for epoch in 0..opts.epochs {
        rng.shuffle(&mut order);
        let mut recon_sum = 0.0;
        for (b, chunk) in order.chunks(opts.batch_size).enumerate() {
            let batch: Vec<&[f64]> = chunk.iter().map(|&i| samples.row(i)).collect();
            let dead = state.dead_mask(cfg.dead_steps_threshold);
            let res = evaluate_batch(&dict, cfg, &batch, Some(&dead)).map_err(|e| match e {
                Error::NonFinite { context } => Error::NonFinite {
                    context: format!("{context} at epoch {epoch}, batch {b}"),
                },
                other => other,
            })?;
            if !res.grads.is_finite() {
                return Err(Error::NonFinite {
                    context: format!("gradients at epoch {epoch}, batch {b}"),
                });
            }
            adam_step(&mut state, &mut dict, &res.grads, &opts.adam)?;
            state.record_activity(&res.active);
            recon_sum += res.loss.recon * chunk.len() as f64;
            if opts.log_every > 0 && state.step % opts.log_every == 0 {
                log.records.push(LogRecord {
                    step: state.step,
                    epoch,
                    lr: lr_at(state.step, &state.schedule),
                    loss: res.loss,
                    dead_atoms: state.dead_mask(cfg.dead_steps_threshold).iter().filter(|&&d| d).count(),
                });
            }
        }
        log.epoch_recon.push(recon_sum / n as f64);
    }
    Ok((dict, log, state))
}

/// Sum of `‖x − x̂‖²` over a batch for inspection in tests and tools.
pub fn batch_recon(dict: &Dictionary, cfg: &EncoderConfig, batch: &[&[f64]]) -> Result<f64> {
    let codes = encoder::encode_batch(dict, cfg, batch, None)?;
    let mut total = 0.0;
    for (x, code) in batch.iter().zip(&codes) {
        let xhat = encoder::decode(dict, code)?;
        total += x.iter().zip(xhat.iter()).map(|(a, b)| (a - b) * (a - b)).sum::<f64>();
    }
    Ok(total)
}
