// SPDX-License-Identifier: MIT OR Apache-2.0

//! Independent reference implementations shared by the integration tests
//! and the acceptance suite.

#![allow(dead_code)]

use sparsedict_core::dictionary::{Dictionary, EncoderConfig, MpSelection, Variant};
use sparsedict_core::encoder::pre_activations;
use sparsedict_core::linalg::{dot, finite_difference_gradient, norm, DenseMatrix, DenseVector};
use sparsedict_core::trainer::{loss_and_gradients, GradientSet};
use sparsedict_core::Rng;

pub fn mp_dictionary(d: DenseMatrix, b_pre: Vec<f64>) -> Dictionary {
    Dictionary {
        d,
        b_pre: DenseVector::from(b_pre),
        encoder_weights: None,
        encoder_bias: None,
        thresholds: None,
    }
}

/// Smallest nonzero singular value of `d`.
pub fn range_sigma_min(d: &DenseMatrix) -> f64 {
    let (m, p) = d.shape();
    let sv = nalgebra::DMatrix::from_fn(m, p, |i, j| d[(i, j)]).singular_values();
    let smax = sv.max();
    sv.iter().copied().filter(|&s| s > 1e-10 * smax).fold(f64::INFINITY, f64::min)
}

/// Each absolute-selection step removes at least `σ_min²/p` of the
/// in-range residual energy. True when that guaranteed rate alone
/// shrinks the in-range residual by `factor` within `steps`.
pub fn rate_guarantees(d: &DenseMatrix, steps: usize, factor: f64) -> bool {
    let s = range_sigma_min(d);
    let rate = 1.0 - s * s / d.cols() as f64;
    (steps as f64 / 2.0) * rate.ln() <= factor.ln()
}


/// `D = Q·B` with `Q` an `m × rank` orthonormal basis and unit columns,
/// plus the residual oracle `x − proj_range(D)(x)` computed from the
/// eigenvectors of `D·Dᵀ`.
pub fn rank_deficient_instance(m: usize, rank: usize, p: usize, rng: &mut Rng) -> (DenseMatrix, impl Fn(&[f64]) -> Vec<f64>) {
    let g = nalgebra::DMatrix::from_fn(m, rank, |_, _| rng.normal());
    let q = g.qr().q();
    let a = DenseMatrix::from_row_major(m, rank, (0..m * rank).map(|i| q[(i / rank, i % rank)]).collect()).unwrap();
    let mut d = DenseMatrix::zeros(m, p);
    for j in 0..p {
        let coeffs = rng.normal_vec(rank);
        let col = a.matvec(&coeffs).unwrap();
        let n = norm(&col);
        d.set_column(j, &col.iter().map(|v| v / n).collect::<Vec<_>>()).unwrap();
    }
    let dm = nalgebra::DMatrix::from_fn(m, p, |i, j| d[(i, j)]);
    let eig = (&dm * dm.transpose()).symmetric_eigen();
    let lmax = eig.eigenvalues.max();
    let basis: Vec<Vec<f64>> = eig
        .eigenvalues
        .iter()
        .enumerate()
        .filter(|&(_, &l)| l > 1e-10 * lmax)
        .map(|(i, _)| eig.eigenvectors.column(i).iter().copied().collect())
        .collect();
    assert_eq!(basis.len(), rank);
    let project_out = move |x: &[f64]| {
        let mut out = x.to_vec();
        for u in &basis {
            let c = dot(u, x);
            out.iter_mut().zip(u).for_each(|(e, v)| *e -= c * v);
        }
        out
    };
    (d, project_out)
}

fn abs_dot(d: &DenseMatrix, i: usize, j: usize) -> f64 {
    d.column_iter(i).zip(d.column_iter(j)).map(|(a, b)| a * b).sum::<f64>().abs()
}

/// `max over |S| = r, j ∉ S of Σ_{i∈S} |⟨D_i, D_j⟩|`, by enumerating every
/// subset as a bitmask.
pub fn babel_brute_force(d: &DenseMatrix, r: usize) -> f64 {
    let p = d.cols();
    let mut best = 0.0f64;
    for mask in 0u32..(1 << p) {
        if mask.count_ones() as usize != r {
            continue;
        }
        for j in (0..p).filter(|j| mask & (1 << j) == 0) {
            let s: f64 = (0..p).filter(|i| mask & (1 << i) != 0).map(|i| abs_dot(d, i, j)).sum();
            best = best.max(s);
        }
    }
    best
}

pub const GRAD_MARGIN: f64 = 1e-3;
pub const GRAD_H: f64 = 1e-5;
pub const GRAD_REL_TOL: f64 = 1e-4;

pub fn unit_columns(m: usize, p: usize, rng: &mut Rng) -> DenseMatrix {
    let mut d = DenseMatrix::zeros(m, p);
    for j in 0..p {
        let v = rng.normal_vec(m);
        let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        d.set_column(j, &v.iter().map(|x| x / n).collect::<Vec<_>>()).unwrap();
    }
    d
}

pub fn random_instance(variant: Variant, m: usize, p: usize, rng: &mut Rng) -> Dictionary {
    let d = unit_columns(m, p, rng);
    let shallow = variant.is_shallow();
    Dictionary {
        b_pre: DenseVector::from(rng.normal_vec(m).iter().map(|v| 0.3 * v).collect::<Vec<_>>()),
        encoder_weights: shallow.then(|| {
            let mut w = d.clone();
            w.as_mut_slice().iter_mut().for_each(|v| *v += 0.3 * rng.normal());
            w
        }),
        encoder_bias: shallow.then(|| DenseVector::from(rng.normal_vec(p).iter().map(|v| 0.1 * v).collect::<Vec<_>>())),
        thresholds: (variant == Variant::JumpRelu)
            .then(|| DenseVector::from((0..p).map(|_| 0.05 + 0.3 * rng.uniform()).collect::<Vec<_>>())),
        d,
    }
}

// Flatten in the order D, b_pre, W, b, θ.
fn flatten(dict: &Dictionary) -> Vec<f64> {
    let mut v = dict.d.as_slice().to_vec();
    v.extend_from_slice(&dict.b_pre);
    if let Some(w) = &dict.encoder_weights {
        v.extend_from_slice(w.as_slice());
    }
    if let Some(b) = &dict.encoder_bias {
        v.extend_from_slice(b);
    }
    if let Some(t) = &dict.thresholds {
        v.extend_from_slice(t);
    }
    v
}

fn flatten_grads(g: &GradientSet) -> Vec<f64> {
    let mut v = g.d.as_slice().to_vec();
    v.extend_from_slice(&g.b_pre);
    if let Some(w) = &g.w {
        v.extend_from_slice(w.as_slice());
    }
    if let Some(b) = &g.b {
        v.extend_from_slice(b);
    }
    if let Some(t) = &g.theta {
        v.extend_from_slice(t);
    }
    v
}

fn unflatten(template: &Dictionary, v: &[f64]) -> Dictionary {
    let mut out = template.clone();
    let mut at = 0;
    let mut take = |dst: &mut [f64]| {
        dst.copy_from_slice(&v[at..at + dst.len()]);
        at += dst.len();
    };
    take(out.d.as_mut_slice());
    take(out.b_pre.as_mut_slice());
    if let Some(w) = out.encoder_weights.as_mut() {
        take(w.as_mut_slice());
    }
    if let Some(b) = out.encoder_bias.as_mut() {
        take(b.as_mut_slice());
    }
    if let Some(t) = out.thresholds.as_mut() {
        take(t.as_mut_slice());
    }
    out
}

/// Smallest distance of a top-`k`-positive selection from changing: every
/// score away from zero and a gap at the boundary.
fn topk_margin(scores: &[f64], k: usize) -> f64 {
    let mut s: Vec<f64> = scores.to_vec();
    s.sort_by(|a, b| b.total_cmp(a));
    let mut margin = s.iter().map(|v| v.abs()).fold(f64::INFINITY, f64::min);
    if k < s.len() {
        margin = margin.min(s[k - 1] - s[k]);
    }
    margin
}

fn top_positive(scores: &[(usize, f64)], k: usize) -> Vec<usize> {
    let mut s: Vec<(usize, f64)> = scores.iter().copied().filter(|&(_, v)| v > 0.0).collect();
    s.sort_by(|a, b| b.1.total_cmp(&a.1));
    s.into_iter().take(k).map(|(j, _)| j).collect()
}

/// Independent MP replay returning the smallest argmax gap and the final
/// residual and support.
fn mp_replay(dict: &Dictionary, x: &[f64], steps: usize, sel: MpSelection) -> (f64, Vec<f64>, Vec<usize>) {
    let dt = dict.d.transpose();
    let mut r: Vec<f64> = x.iter().zip(dict.b_pre.iter()).map(|(a, b)| a - b).collect();
    let mut margin = f64::INFINITY;
    let mut support = Vec::new();
    for _ in 0..steps {
        let c: Vec<f64> = (0..dict.p()).map(|j| dt.row(j).iter().zip(&r).map(|(a, b)| a * b).sum()).collect();
        let score = |v: f64| if sel == MpSelection::Absolute { v.abs() } else { v };
        let mut idx: Vec<usize> = (0..c.len()).collect();
        idx.sort_by(|&a, &b| score(c[b]).total_cmp(&score(c[a])));
        margin = margin.min(score(c[idx[0]]) - score(c[idx[1]]));
        let j = idx[0];
        for (ri, a) in r.iter_mut().zip(dt.row(j)) {
            *ri -= c[j] * a;
        }
        support.push(j);
    }
    support.sort_unstable();
    support.dedup();
    (margin, r, support)
}

fn margin_ok(dict: &Dictionary, cfg: &EncoderConfig, batch: &[Vec<f64>], dead: Option<&[bool]>) -> bool {
    let p = dict.p();
    let mut margin = f64::INFINITY;
    match cfg.variant {
        Variant::Mp => {
            for x in batch {
                let (g, r, support) = mp_replay(dict, x, cfg.k, cfg.mp_selection);
                margin = margin.min(g);
                if let Some(dead) = dead {
                    let c = dict.d.matvec_transposed(&r).unwrap();
                    let eligible: Vec<f64> = (0..p)
                        .filter(|j| dead[*j] && !support.contains(j))
                        .map(|j| if cfg.mp_selection == MpSelection::Absolute { c[j].abs() } else { c[j] })
                        .collect();
                    margin = margin.min(topk_margin(&eligible, cfg.aux_k.min(eligible.len().max(1))));
                }
            }
        }
        _ => {
            let us: Vec<Vec<f64>> = batch.iter().map(|x| pre_activations(dict, x).unwrap()).collect();
            let actives: Vec<Vec<usize>> = match cfg.variant {
                Variant::Relu => us
                    .iter()
                    .map(|u| {
                        margin = margin.min(topk_margin(u, u.len()));
                        (0..p).filter(|&j| u[j] > 0.0).collect()
                    })
                    .collect(),
                Variant::JumpRelu => {
                    let t = dict.thresholds.as_ref().unwrap();
                    us.iter()
                        .map(|u| {
                            let diff: Vec<f64> = u.iter().zip(t.iter()).map(|(a, b)| a - b).collect();
                            margin = margin.min(topk_margin(&diff, p));
                            (0..p).filter(|&j| diff[j] > 0.0).collect()
                        })
                        .collect()
                }
                Variant::TopK => us
                    .iter()
                    .map(|u| {
                        margin = margin.min(topk_margin(u, cfg.k));
                        top_positive(&u.iter().copied().enumerate().collect::<Vec<_>>(), cfg.k)
                    })
                    .collect(),
                Variant::BatchTopK => {
                    let flat: Vec<(usize, f64)> = us
                        .iter()
                        .enumerate()
                        .flat_map(|(i, u)| u.iter().enumerate().map(move |(j, &v)| (i * p + j, v)))
                        .collect();
                    let values: Vec<f64> = flat.iter().map(|e| e.1).collect();
                    margin = margin.min(topk_margin(&values, cfg.k * batch.len()));
                    let chosen = top_positive(&flat, cfg.k * batch.len());
                    (0..batch.len())
                        .map(|i| chosen.iter().filter(|&&f| f / p == i).map(|&f| f % p).collect())
                        .collect()
                }
                Variant::Mp => unreachable!(),
            };
            if let Some(dead) = dead {
                for (u, active) in us.iter().zip(&actives) {
                    let eligible: Vec<f64> = (0..p).filter(|j| dead[*j] && !active.contains(j)).map(|j| u[j]).collect();
                    if !eligible.is_empty() {
                        margin = margin.min(topk_margin(&eligible, cfg.aux_k.min(eligible.len())));
                    }
                }
            }
        }
    }
    margin >= GRAD_MARGIN
}

/// Compares analytic and finite-difference gradients on `instances`
/// random instances away from kinks. Returns the largest relative error.
pub fn gradient_check(variant: Variant, with_aux: bool, seed: u64, instances: usize) -> Result<f64, String> {
    let (m, p, batch_size) = (5, 8, 3);
    let mut rng = Rng::new(seed);
    let mut checked = 0;
    let mut attempts = 0;
    let mut worst = 0.0f64;
    while checked < instances {
        attempts += 1;
        if attempts >= 200 * instances {
            return Err(format!("{variant}: could not draw instances away from kinks"));
        }
        let dict = random_instance(variant, m, p, &mut rng);
        let mut cfg = EncoderConfig::new(variant, 3, p);
        cfg.lambda = 0.05;
        cfg.aux_alpha = if with_aux { 0.5 } else { 0.0 };
        cfg.aux_k = 2;
        cfg.mp_selection = if rng.uniform() < 0.5 { MpSelection::Signed } else { MpSelection::Absolute };
        let batch: Vec<Vec<f64>> = (0..batch_size).map(|_| rng.normal_vec(m)).collect();
        let dead: Option<Vec<bool>> = with_aux.then(|| (0..p).map(|j| j % 2 == 0 || rng.uniform() < 0.3).collect());
        if !margin_ok(&dict, &cfg, &batch, dead.as_deref()) {
            continue;
        }
        let (loss, grads) = loss_and_gradients(&dict, &cfg, &batch, dead.as_deref()).map_err(|e| e.to_string())?;
        if with_aux && loss.aux == 0.0 {
            continue;
        }
        let analytic = flatten_grads(&grads);
        let numeric = finite_difference_gradient(
            |v| loss_and_gradients(&unflatten(&dict, v), &cfg, &batch, dead.as_deref()).unwrap().0.total,
            &flatten(&dict),
            GRAD_H,
        )
        .map_err(|e| e.to_string())?;
        let diff = analytic.iter().zip(numeric.iter()).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
        let scale = numeric.iter().map(|v| v * v).sum::<f64>().sqrt().max(1e-8);
        let rel = diff / scale;
        if !(rel < GRAD_REL_TOL) {
            return Err(format!("{variant} (aux = {with_aux}) instance {checked}: relative error {rel:e}"));
        }
        worst = worst.max(rel);
        checked += 1;
    }
    Ok(worst)
}
