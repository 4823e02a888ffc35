// SPDX-License-Identifier: MIT OR Apache-2.0

//! Forward inference for the five encoder variants.
//!
//! Shallow encoders compute `u = Wᵀ(x − b_pre) + b` once and sparsify it.
//! The MP encoder runs matching pursuit on `r⁽⁰⁾ = x − b_pre` with the
//! decoder `D` as the correlation filter:
//!
//! ```text
//! j⁽ᵗ⁾ = argmax_j (Dᵀ r⁽ᵗ⁻¹⁾)_j
//! z⁽ᵗ⁾ = D_jᵀ r⁽ᵗ⁻¹⁾
//! x̂⁽ᵗ⁾ = x̂⁽ᵗ⁻¹⁾ + z⁽ᵗ⁾ D_j
//! r⁽ᵗ⁾ = r⁽ᵗ⁻¹⁾ − z⁽ᵗ⁾ D_j
//! ```
//!
//! Ties are broken towards the lowest index everywhere.

use std::cmp::Ordering;

use crate::dictionary::{Dictionary, EncoderConfig, MpSelection, Variant};
use crate::error::{Error, Result};
use crate::linalg::{axpy_in_place, norm, DenseVector};

/// MP stops early once `‖r‖₂` falls below this value.
pub const RESIDUAL_EPS: f64 = 1e-12;

/// Sparse code over `p` atoms.
///
/// `active` keeps entries in production order: MP entries are in selection
/// order (entry `t−1` was produced at step `t`) and may repeat an index;
/// shallow encoders list each index at most once.
#[derive(Debug, Clone, PartialEq)]
pub struct SparseCode {
    p: usize,
    active: Vec<(usize, f64)>,
}

impl SparseCode {
    pub fn new(p: usize, active: Vec<(usize, f64)>) -> Result<Self> {
        if let Some(&(j, _)) = active.iter().find(|(j, _)| *j >= p) {
            return Err(Error::IndexOutOfRange {
                op: "SparseCode::new",
                index: j,
                len: p,
            });
        }
        Ok(Self { p, active })
    }

    pub fn empty(p: usize) -> Self {
        Self {
            p,
            active: Vec::new(),
        }
    }

    pub fn p(&self) -> usize {
        self.p
    }

    pub fn active(&self) -> &[(usize, f64)] {
        &self.active
    }

    /// Number of entries, counting repeated MP selections.
    pub fn len(&self) -> usize {
        self.active.len()
    }

    pub fn is_empty(&self) -> bool {
        self.active.is_empty()
    }

    /// Dense length-`p` vector; repeated indices are summed.
    pub fn dense(&self) -> DenseVector {
        let mut z = vec![0.0; self.p];
        for &(j, v) in &self.active {
            z[j] += v;
        }
        z.into()
    }

    /// Sorted, deduplicated active indices.
    pub fn support(&self) -> Vec<usize> {
        let mut s: Vec<usize> = self.active.iter().map(|(j, _)| *j).collect();
        s.sort_unstable();
        s.dedup();
        s
    }

    /// Entries sorted by descending coefficient (ties: lower index first),
    /// the order used to replay shallow codes as a sequence.
    pub fn by_descending_value(&self) -> Vec<(usize, f64)> {
        let mut v = self.active.clone();
        v.sort_by(|a, b| desc_value_then_index(a.1, a.0, b.1, b.0));
        v
    }
}

/// Per-step record of an inference run.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct InferenceTrace {
    /// `‖r⁽ᵗ⁾‖₂` for `t = 0..=T'` where `T'` is the number of executed steps
    /// (MP), or the single final residual norm (shallow).
    pub residual_norms: Vec<f64>,
    /// `x̂⁽⁰⁾..x̂⁽ᵀ'⁾` when requested.
    pub partial_reconstructions: Option<Vec<DenseVector>>,
}

fn desc_value_then_index(va: f64, ia: usize, vb: f64, ib: usize) -> Ordering {
    vb.partial_cmp(&va).unwrap_or(Ordering::Equal).then(ia.cmp(&ib))
}

fn check_input(dict: &Dictionary, x: &[f64], op: &'static str) -> Result<()> {
    if x.len() != dict.m() {
        return Err(Error::DimensionMismatch {
            op,
            left: dict.d.shape(),
            right: (x.len(), 1),
        });
    }
    Ok(())
}

/// `x − b_pre`.
pub(crate) fn centered(dict: &Dictionary, x: &[f64]) -> Vec<f64> {
    x.iter().zip(dict.b_pre.iter()).map(|(a, b)| a - b).collect()
}

/// Shallow pre-activations `u = Wᵀ(x − b_pre) + b`.
pub fn pre_activations(dict: &Dictionary, x: &[f64]) -> Result<Vec<f64>> {
    check_input(dict, x, "pre_activations")?;
    let w = dict.encoder_weights.as_ref().ok_or_else(|| {
        Error::InvalidArgument("shallow encoder requires encoder weights".to_string())
    })?;
    let mut u = vec![0.0; dict.p()];
    w.matvec_transposed_into(&centered(dict, x), &mut u)?;
    if let Some(b) = &dict.encoder_bias {
        u.iter_mut().zip(b.iter()).for_each(|(ui, bi)| *ui += bi);
    }
    Ok(u)
}

/// Indices of the `k` largest strictly positive entries of `u`, in
/// descending value order.
pub(crate) fn top_k_positive(u: &[f64], k: usize) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..u.len()).filter(|&j| u[j] > 0.0).collect();
    if idx.len() > k {
        idx.select_nth_unstable_by(k, |&a, &b| desc_value_then_index(u[a], a, u[b], b));
        idx.truncate(k);
    }
    idx.sort_by(|&a, &b| desc_value_then_index(u[a], a, u[b], b));
    idx
}

/// Global BatchTopK selection over per-sample pre-activations: the `k·B`
/// largest positive entries (ties: lower sample, then lower atom). Returns
/// per-sample atom lists in descending value order.
pub(crate) fn batch_top_k_positive(us: &[Vec<f64>], k: usize) -> Vec<Vec<usize>> {
    let budget = k * us.len();
    let mut cand: Vec<(f64, usize, usize)> = us
        .iter()
        .enumerate()
        .flat_map(|(s, u)| {
            u.iter()
                .enumerate()
                .filter(|(_, v)| **v > 0.0)
                .map(move |(j, v)| (*v, s, j))
        })
        .collect();
    let order = |a: &(f64, usize, usize), b: &(f64, usize, usize)| {
        b.0.partial_cmp(&a.0)
            .unwrap_or(Ordering::Equal)
            .then(a.1.cmp(&b.1))
            .then(a.2.cmp(&b.2))
    };
    if cand.len() > budget {
        cand.select_nth_unstable_by(budget, order);
        cand.truncate(budget);
    }
    cand.sort_by(order);
    let mut out = vec![Vec::new(); us.len()];
    for (_, s, j) in cand {
        out[s].push(j);
    }
    out
}

pub fn encode_relu(dict: &Dictionary, x: &[f64]) -> Result<SparseCode> {
    let u = pre_activations(dict, x)?;
    let active = u
        .iter()
        .enumerate()
        .filter(|(_, v)| **v > 0.0)
        .map(|(j, v)| (j, *v))
        .collect();
    Ok(SparseCode {
        p: dict.p(),
        active,
    })
}

/// `z_j = u_j · 1[u_j > θ_j]`.
pub fn encode_jumprelu(dict: &Dictionary, x: &[f64]) -> Result<SparseCode> {
    let theta = dict
        .thresholds
        .as_ref()
        .ok_or_else(|| Error::InvalidArgument("jumprelu requires thresholds".to_string()))?;
    let u = pre_activations(dict, x)?;
    let active = u
        .iter()
        .zip(theta.iter())
        .enumerate()
        .filter(|(_, (v, t))| **v > **t)
        .map(|(j, (v, _))| (j, *v))
        .collect();
    Ok(SparseCode {
        p: dict.p(),
        active,
    })
}

/// Keeps the `k` largest positive pre-activations.
pub fn encode_topk(dict: &Dictionary, x: &[f64], k: usize) -> Result<SparseCode> {
    let u = pre_activations(dict, x)?;
    let active = top_k_positive(&u, k).into_iter().map(|j| (j, u[j])).collect();
    Ok(SparseCode {
        p: dict.p(),
        active,
    })
}

/// Pools a budget of `k·B` positive activations across the batch.
pub fn encode_batchtopk<X: AsRef<[f64]>>(
    dict: &Dictionary,
    batch: &[X],
    k: usize,
) -> Result<Vec<SparseCode>> {
    if batch.is_empty() {
        return Err(Error::InvalidArgument("encode_batchtopk: empty batch".to_string()));
    }
    let us = batch
        .iter()
        .map(|x| pre_activations(dict, x.as_ref()))
        .collect::<Result<Vec<_>>>()?;
    let sel = batch_top_k_positive(&us, k);
    Ok(us
        .iter()
        .zip(sel)
        .map(|(u, idx)| SparseCode {
            p: dict.p(),
            active: idx.into_iter().map(|j| (j, u[j])).collect(),
        })
        .collect())
}

/// Options for [`encode_mp`].
#[derive(Debug, Clone, Copy, Default)]
pub struct MpOptions {
    pub selection: MpSelection,
    pub record_partials: bool,
}

/// Raw MP run: selections, coefficients and, optionally, every residual.
#[derive(Debug, Clone)]
pub(crate) struct MpRun {
    pub selected: Vec<usize>,
    pub coeffs: Vec<f64>,
    /// `r⁽⁰⁾..r⁽ᵀ'⁾` when residuals were kept, else only the final residual.
    pub residuals: Vec<Vec<f64>>,
    pub residual_norms: Vec<f64>,
}

impl MpRun {
    pub fn final_residual(&self) -> &[f64] {
        self.residuals.last().expect("at least r0")
    }
}

/// Picks the atom for one MP step from the correlations `c = Dᵀr`.
pub(crate) fn select_atom(c: &[f64], selection: MpSelection) -> usize {
    let score = |v: f64| match selection {
        MpSelection::Signed => v,
        MpSelection::Absolute => v.abs(),
    };
    let mut best = 0;
    let mut best_score = score(c[0]);
    for (j, &v) in c.iter().enumerate().skip(1) {
        let s = score(v);
        if s > best_score {
            best = j;
            best_score = s;
        }
    }
    best
}

pub(crate) fn mp_run(
    dict: &Dictionary,
    x: &[f64],
    steps: usize,
    selection: MpSelection,
    keep_residuals: bool,
) -> Result<MpRun> {
    check_input(dict, x, "encode_mp")?;
    let mut r = centered(dict, x);
    let mut c = vec![0.0; dict.p()];
    let mut run = MpRun {
        selected: Vec::with_capacity(steps),
        coeffs: Vec::with_capacity(steps),
        residuals: Vec::new(),
        residual_norms: vec![norm(&r)],
    };
    let mut atom = vec![0.0; dict.m()];
    for _ in 0..steps {
        if *run.residual_norms.last().expect("nonempty") < RESIDUAL_EPS {
            break;
        }
        dict.d.matvec_transposed_into(&r, &mut c)?;
        let j = select_atom(&c, selection);
        atom.iter_mut()
            .zip(dict.d.column_iter(j))
            .for_each(|(a, v)| *a = v);
        let z = atom.iter().zip(&r).map(|(a, b)| a * b).sum::<f64>();
        if keep_residuals {
            run.residuals.push(r.clone());
        }
        axpy_in_place(-z, &atom, &mut r);
        run.selected.push(j);
        run.coeffs.push(z);
        run.residual_norms.push(norm(&r));
    }
    run.residuals.push(r);
    Ok(run)
}

/// Runs `steps` matching-pursuit iterations on `x`.
pub fn encode_mp(
    dict: &Dictionary,
    x: &[f64],
    steps: usize,
    opts: MpOptions,
) -> Result<(SparseCode, InferenceTrace)> {
    let run = mp_run(dict, x, steps, opts.selection, false)?;
    let partial_reconstructions = opts.record_partials.then(|| {
        let mut xhat = dict.b_pre.as_slice().to_vec();
        let mut out = vec![DenseVector::from(xhat.clone())];
        for (&j, &z) in run.selected.iter().zip(&run.coeffs) {
            dict.d.add_scaled_column(j, z, &mut xhat);
            out.push(DenseVector::from(xhat.clone()));
        }
        out
    });
    let code = SparseCode {
        p: dict.p(),
        active: run.selected.iter().copied().zip(run.coeffs.iter().copied()).collect(),
    };
    Ok((
        code,
        InferenceTrace {
            residual_norms: run.residual_norms,
            partial_reconstructions,
        },
    ))
}

/// `x̂ = D·dense(z) + b_pre`.
pub fn decode(dict: &Dictionary, code: &SparseCode) -> Result<DenseVector> {
    if code.p != dict.p() {
        return Err(Error::DimensionMismatch {
            op: "decode",
            left: dict.d.shape(),
            right: (code.p, 1),
        });
    }
    let mut xhat = dict.b_pre.as_slice().to_vec();
    for &(j, z) in &code.active {
        dict.d.add_scaled_column(j, z, &mut xhat);
    }
    Ok(xhat.into())
}

/// Encodes a batch with the variant in `cfg`. `k` overrides `cfg.k` for
/// TopK, BatchTopK and MP; ReLU and JumpReLU ignore it.
pub fn encode_batch<X: AsRef<[f64]>>(
    dict: &Dictionary,
    cfg: &EncoderConfig,
    batch: &[X],
    k: Option<usize>,
) -> Result<Vec<SparseCode>> {
    let k = k.unwrap_or(cfg.k);
    match cfg.variant {
        Variant::BatchTopK => encode_batchtopk(dict, batch, k),
        Variant::Relu => batch.iter().map(|x| encode_relu(dict, x.as_ref())).collect(),
        Variant::JumpRelu => batch.iter().map(|x| encode_jumprelu(dict, x.as_ref())).collect(),
        Variant::TopK => batch.iter().map(|x| encode_topk(dict, x.as_ref(), k)).collect(),
        Variant::Mp => {
            let opts = MpOptions {
                selection: cfg.mp_selection,
                record_partials: false,
            };
            batch
                .iter()
                .map(|x| encode_mp(dict, x.as_ref(), k, opts).map(|(c, _)| c))
                .collect()
        }
    }
}
