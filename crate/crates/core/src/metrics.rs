// SPDX-License-Identifier: MIT OR Apache-2.0

//! Evaluation quantities: R², coherence, Babel, activation statistics and
//! residual-decay curves, with CSV exporters.

use std::fmt::Write as _;

use crate::dictionary::{Dictionary, EncoderConfig, Variant};
use crate::encoder::{decode, encode_batch, mp_run, SparseCode};
use crate::error::{Error, Result};
use crate::linalg::{dot, DenseMatrix};

const UNIT_NORM_TOLERANCE: f64 = 1e-6;

/// Marker written to CSV for undefined statistics.
pub const UNDEFINED: &str = "NA";

/// `1 − Σ‖xᵢ − x̂ᵢ‖² / Σ‖xᵢ − x̄‖²` over the whole batch.
pub fn r_squared(x: &DenseMatrix, xhat: &DenseMatrix) -> Result<f64> {
    if x.shape() != xhat.shape() {
        return Err(Error::DimensionMismatch {
            op: "r_squared",
            left: x.shape(),
            right: xhat.shape(),
        });
    }
    if x.rows() < 2 {
        return Err(Error::InvalidArgument(format!(
            "r_squared needs at least 2 samples, got {}",
            x.rows()
        )));
    }
    let m = x.cols();
    let mut mean = vec![0.0; m];
    for row in x.row_iter() {
        mean.iter_mut().zip(row).for_each(|(a, v)| *a += v);
    }
    mean.iter_mut().for_each(|a| *a /= x.rows() as f64);
    let mut err = 0.0;
    let mut var = 0.0;
    for (a, b) in x.row_iter().zip(xhat.row_iter()) {
        for i in 0..m {
            err += (a[i] - b[i]).powi(2);
            var += (a[i] - mean[i]).powi(2);
        }
    }
    if var == 0.0 {
        return Err(Error::InvalidArgument(
            "r_squared undefined: batch has zero variance".to_string(),
        ));
    }
    Ok(1.0 - err / var)
}

fn check_unit_columns(d: &DenseMatrix, op: &str) -> Result<()> {
    for (j, n) in d.column_norms().into_iter().enumerate() {
        if (n - 1.0).abs() > UNIT_NORM_TOLERANCE {
            return Err(Error::InvalidArgument(format!(
                "{op}: column {j} has norm {n}, expected unit norm"
            )));
        }
    }
    Ok(())
}

/// `max_{i≠j} |D_iᵀ D_j|`.
pub fn mutual_coherence(d: &DenseMatrix) -> Result<f64> {
    if d.cols() < 2 {
        return Err(Error::InvalidArgument(format!(
            "mutual coherence needs p ≥ 2, got {}",
            d.cols()
        )));
    }
    check_unit_columns(d, "mutual_coherence")?;
    let g = d.gram();
    let mut mu = 0.0f64;
    for i in 0..d.cols() {
        for j in i + 1..d.cols() {
            mu = mu.max(g[(i, j)].abs());
        }
    }
    Ok(mu)
}

/// Per column, the off-diagonal `|Gram|` entries sorted descending and
/// prefix-summed: `out[j][r-1]` is the sum of the `r` largest.
fn top_sums(g: &DenseMatrix) -> Vec<Vec<f64>> {
    let p = g.rows();
    (0..p)
        .map(|j| {
            let mut v: Vec<f64> = (0..p).filter(|&i| i != j).map(|i| g[(i, j)].abs()).collect();
            v.sort_by(|a, b| b.total_cmp(a));
            let mut acc = 0.0;
            v.iter()
                .map(|x| {
                    acc += x;
                    acc
                })
                .collect()
        })
        .collect()
}

fn babel_from_sums(sums: &[Vec<f64>], r: usize) -> f64 {
    sums.iter().map(|s| s[r - 1]).fold(0.0, f64::max)
}

fn check_order(r: usize, p: usize) -> Result<()> {
    if r == 0 || r >= p {
        return Err(Error::InvalidArgument(format!(
            "Babel order r = {r} out of range 1..={}",
            p.saturating_sub(1)
        )));
    }
    Ok(())
}

/// Babel function `μ₁(r)`: the largest total `|correlation|` between one
/// atom and `r` others.
pub fn babel(d: &DenseMatrix, r: usize) -> Result<f64> {
    check_order(r, d.cols())?;
    check_unit_columns(d, "babel")?;
    Ok(babel_from_sums(&top_sums(&d.gram()), r))
}

#[derive(Debug, Clone, PartialEq)]
pub struct BabelCurve {
    pub orders: Vec<usize>,
    pub values: Vec<f64>,
}

/// `μ₁(r)` for every `r` in `orders`, sharing one Gram matrix.
pub fn babel_curve(d: &DenseMatrix, orders: &[usize]) -> Result<BabelCurve> {
    for &r in orders {
        check_order(r, d.cols())?;
    }
    check_unit_columns(d, "babel")?;
    let sums = top_sums(&d.gram());
    Ok(BabelCurve {
        orders: orders.to_vec(),
        values: orders.iter().map(|&r| babel_from_sums(&sums, r)).collect(),
    })
}

/// Order used for co-activated Babel.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CoactOrder {
    Fixed(usize),
    /// `r = |S| − 1` per sample: every co-active atom counts.
    SupportMinusOne,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DistributionSummary {
    pub mean: f64,
    pub max: f64,
    /// Quantiles at 5, 25, 50, 75 and 95 percent.
    pub quantiles: [f64; 5],
    pub evaluated: usize,
    pub skipped: usize,
}

pub const QUANTILE_LEVELS: [f64; 5] = [0.05, 0.25, 0.5, 0.75, 0.95];

/// Linear-interpolation quantile of sorted data.
fn quantile(sorted: &[f64], q: f64) -> f64 {
    let pos = q * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    sorted[lo] + (sorted[hi] - sorted[lo]) * (pos - lo as f64)
}

fn summarize(mut values: Vec<f64>, skipped: usize) -> DistributionSummary {
    values.sort_by(f64::total_cmp);
    let n = values.len();
    DistributionSummary {
        mean: values.iter().sum::<f64>() / n as f64,
        max: values[n - 1],
        quantiles: QUANTILE_LEVELS.map(|q| quantile(&values, q)),
        evaluated: n,
        skipped,
    }
}

/// Babel of the sub-dictionary of atoms active in each sample; samples with
/// `|S| ≤ r` are skipped.
pub fn coactivation_babel(codes: &[SparseCode], d: &DenseMatrix, order: CoactOrder) -> Result<DistributionSummary> {
    if order == CoactOrder::Fixed(0) {
        return Err(Error::InvalidArgument("Babel order r must be ≥ 1".to_string()));
    }
    let dt = d.transpose();
    let mut values = Vec::new();
    let mut skipped = 0;
    for code in codes {
        if code.p() != d.cols() {
            return Err(Error::DimensionMismatch {
                op: "coactivation_babel",
                left: d.shape(),
                right: (code.p(), 1),
            });
        }
        let s = code.support();
        let r = match order {
            CoactOrder::Fixed(r) => r,
            CoactOrder::SupportMinusOne => s.len().saturating_sub(1).max(1),
        };
        if s.len() <= r {
            skipped += 1;
            continue;
        }
        let sums: Vec<Vec<f64>> = {
            let n = s.len();
            let mut g = DenseMatrix::zeros(n, n);
            for a in 0..n {
                for b in a..n {
                    let v = dot(dt.row(s[a]), dt.row(s[b]));
                    g[(a, b)] = v;
                    g[(b, a)] = v;
                }
            }
            top_sums(&g)
        };
        values.push(babel_from_sums(&sums, r));
    }
    if values.is_empty() {
        return Err(Error::InvalidArgument(format!(
            "no sample has more than r active atoms ({skipped} skipped)"
        )));
    }
    Ok(summarize(values, skipped))
}

/// How selection positions are assigned to active atoms.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SelectionOrder {
    /// Order of the active list (MP iteration order); first pick counts.
    Iteration,
    /// Rank by descending coefficient (shallow encoders).
    ByValue,
}

impl SelectionOrder {
    pub fn for_variant(v: Variant) -> Self {
        if v == Variant::Mp {
            SelectionOrder::Iteration
        } else {
            SelectionOrder::ByValue
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ActivationStats {
    pub freq: Vec<f64>,
    pub mean_value: Vec<f64>,
    pub mean_value_when_active: Vec<Option<f64>>,
    /// 1-based average position at which each atom enters the code.
    pub mean_selection_step: Vec<Option<f64>>,
}

impl ActivationStats {
    pub fn p(&self) -> usize {
        self.freq.len()
    }

    /// Atom indices sorted by a key, descending, ties by lower index.
    fn ranked(key: &[f64]) -> Vec<usize> {
        let mut idx: Vec<usize> = (0..key.len()).collect();
        idx.sort_by(|&a, &b| key[b].total_cmp(&key[a]).then(a.cmp(&b)));
        idx
    }

    pub fn rank_by_frequency(&self) -> Vec<usize> {
        Self::ranked(&self.freq)
    }

    pub fn rank_by_mean_value(&self) -> Vec<usize> {
        Self::ranked(&self.mean_value)
    }

    pub fn to_csv(&self) -> String {
        let opt = |v: Option<f64>| v.map_or(UNDEFINED.to_string(), |x| x.to_string());
        let mut s = String::from("atom,freq,mean_value,mean_value_active,mean_selection_step\n");
        for j in 0..self.p() {
            let _ = writeln!(
                s,
                "{j},{},{},{},{}",
                self.freq[j],
                self.mean_value[j],
                opt(self.mean_value_when_active[j]),
                opt(self.mean_selection_step[j])
            );
        }
        s
    }
}

/// Per-atom usage statistics. Duplicate MP selections count once for
/// frequency and are summed for values.
pub fn activation_stats(codes: &[SparseCode], p: usize, order: SelectionOrder) -> Result<ActivationStats> {
    let mut count = vec![0usize; p];
    let mut total = vec![0.0; p];
    let mut step_sum = vec![0.0; p];
    let mut seen = vec![usize::MAX; p];
    for (n, code) in codes.iter().enumerate() {
        let list = match order {
            SelectionOrder::Iteration => code.active().to_vec(),
            SelectionOrder::ByValue => code.by_descending_value(),
        };
        let mut step = 0;
        for (j, z) in list {
            if j >= p {
                return Err(Error::IndexOutOfRange {
                    op: "activation_stats",
                    index: j,
                    len: p,
                });
            }
            total[j] += z;
            if seen[j] != n {
                seen[j] = n;
                step += 1;
                count[j] += 1;
                step_sum[j] += step as f64;
            }
        }
    }
    let n = codes.len().max(1) as f64;
    let defined = |num: f64, c: usize| (c > 0).then(|| num / c as f64);
    Ok(ActivationStats {
        freq: count.iter().map(|&c| c as f64 / n).collect(),
        mean_value: total.iter().map(|t| t / n).collect(),
        mean_value_when_active: total.iter().zip(&count).map(|(&t, &c)| defined(t, c)).collect(),
        mean_selection_step: step_sum.iter().zip(&count).map(|(&s, &c)| defined(s, c)).collect(),
    })
}

/// Encodes and decodes every row of `x`.
pub fn reconstruct(
    dict: &Dictionary,
    cfg: &EncoderConfig,
    x: &DenseMatrix,
    k: Option<usize>,
) -> Result<(DenseMatrix, Vec<SparseCode>)> {
    if x.cols() != dict.m() {
        return Err(Error::DimensionMismatch {
            op: "reconstruct",
            left: dict.d.shape(),
            right: x.shape(),
        });
    }
    let rows: Vec<&[f64]> = x.row_iter().collect();
    let codes = encode_batch(dict, cfg, &rows, k)?;
    let mut out = DenseMatrix::zeros(x.rows(), x.cols());
    for (i, code) in codes.iter().enumerate() {
        out.row_mut(i).copy_from_slice(&decode(dict, code)?);
    }
    Ok((out, codes))
}

/// Mean squared reconstruction error for inference sparsity `k = 1..=k_max`.
/// ReLU and JumpReLU ignore `k` and give a flat curve.
pub fn residual_curve(dict: &Dictionary, cfg: &EncoderConfig, x: &DenseMatrix, k_max: usize) -> Result<Vec<f64>> {
    if k_max == 0 {
        return Err(Error::InvalidArgument("k_max must be ≥ 1".to_string()));
    }
    if x.cols() != dict.m() {
        return Err(Error::DimensionMismatch {
            op: "residual_curve",
            left: dict.d.shape(),
            right: x.shape(),
        });
    }
    let n = x.rows() as f64;
    let mean_err = |xhat: &DenseMatrix| -> f64 {
        x.row_iter()
            .zip(xhat.row_iter())
            .map(|(a, b)| a.iter().zip(b).map(|(u, v)| (u - v).powi(2)).sum::<f64>())
            .sum::<f64>()
            / n
    };
    match cfg.variant {
        Variant::Mp => {
            // One run of k_max steps yields every prefix.
            let mut acc = vec![0.0; k_max];
            for row in x.row_iter() {
                let run = mp_run(dict, row, k_max, cfg.mp_selection, false)?;
                let norms = &run.residual_norms;
                for (k, a) in acc.iter_mut().enumerate() {
                    let r = norms[(k + 1).min(norms.len() - 1)];
                    *a += r * r;
                }
            }
            Ok(acc.into_iter().map(|a| a / n).collect())
        }
        Variant::Relu | Variant::JumpRelu => {
            let (xhat, _) = reconstruct(dict, cfg, x, None)?;
            Ok(vec![mean_err(&xhat); k_max])
        }
        Variant::TopK | Variant::BatchTopK => (1..=k_max)
            .map(|k| reconstruct(dict, cfg, x, Some(k)).map(|(xhat, _)| mean_err(&xhat)))
            .collect(),
    }
}

pub fn babel_curve_csv(curve: &BabelCurve) -> String {
    let mut s = String::from("r,mu1\n");
    for (r, v) in curve.orders.iter().zip(&curve.values) {
        let _ = writeln!(s, "{r},{v}");
    }
    s
}

pub fn residual_curve_csv(errors: &[f64]) -> String {
    let mut s = String::from("k,mean_err\n");
    for (k, e) in errors.iter().enumerate() {
        let _ = writeln!(s, "{},{e}", k + 1);
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dictionary::MpSelection;
    use crate::linalg::DenseVector;

    fn cols(c: &[&[f64]]) -> DenseMatrix {
        DenseMatrix::from_columns(c).unwrap()
    }

    #[test]
    fn r_squared_examples() {
        let x = DenseMatrix::from_row_major(2, 2, vec![0.0, 0.0, 2.0, 0.0]).unwrap();
        assert_eq!(r_squared(&x, &x).unwrap(), 1.0);
        let mean = DenseMatrix::from_row_major(2, 2, vec![1.0, 0.0, 1.0, 0.0]).unwrap();
        assert_eq!(r_squared(&x, &mean).unwrap(), 0.0);
        let flat = DenseMatrix::from_row_major(2, 1, vec![3.0, 3.0]).unwrap();
        assert!(r_squared(&flat, &flat).is_err());
        let one = DenseMatrix::from_row_major(1, 1, vec![3.0]).unwrap();
        assert!(r_squared(&one, &one).is_err());
    }

    #[test]
    fn coherence_examples() {
        assert_eq!(mutual_coherence(&DenseMatrix::identity(3)).unwrap(), 0.0);
        assert_eq!(mutual_coherence(&cols(&[&[1.0, 0.0], &[1.0, 0.0]])).unwrap(), 1.0);
        assert!((mutual_coherence(&cols(&[&[1.0, 0.0], &[0.6, 0.8]])).unwrap() - 0.6).abs() < 1e-15);
        assert!(mutual_coherence(&DenseMatrix::identity(1)).is_err());
    }

    #[test]
    fn babel_examples() {
        let h = 0.5f64.sqrt();
        let d = cols(&[&[1.0, 0.0], &[0.0, 1.0], &[h, h]]);
        assert!((babel(&d, 1).unwrap() - h).abs() < 1e-12);
        assert!((babel(&d, 2).unwrap() - 2.0 * h).abs() < 1e-12);
        assert_eq!(babel(&d, 1).unwrap(), mutual_coherence(&d).unwrap());
        assert!(babel(&d, 3).is_err());
        assert!(babel(&d, 0).is_err());
        let id = DenseMatrix::identity(4);
        assert_eq!(babel_curve(&id, &[1, 2, 3]).unwrap().values, vec![0.0; 3]);
    }

    #[test]
    fn coactivation_examples() {
        let d = cols(&[&[1.0, 0.0], &[0.6, 0.8], &[0.0, 1.0]]);
        let code = SparseCode::new(3, vec![(0, 1.0), (1, 0.5)]).unwrap();
        let s = coactivation_babel(&[code.clone()], &d, CoactOrder::Fixed(1)).unwrap();
        assert!((s.mean - 0.6).abs() < 1e-15 && (s.max - 0.6).abs() < 1e-15);
        let s = coactivation_babel(&[code], &d, CoactOrder::SupportMinusOne).unwrap();
        assert!((s.mean - 0.6).abs() < 1e-15);

        let orth = SparseCode::new(3, vec![(0, 1.0), (2, 1.0)]).unwrap();
        let s = coactivation_babel(&[orth.clone(), orth], &d, CoactOrder::Fixed(1)).unwrap();
        assert_eq!(s.mean, 0.0);

        let single = SparseCode::new(3, vec![(1, 1.0)]).unwrap();
        let err = coactivation_babel(&[single], &d, CoactOrder::Fixed(1)).unwrap_err();
        assert!(err.to_string().contains("1 skipped"));
    }

    #[test]
    fn quantiles_interpolate() {
        let s = summarize(vec![4.0, 0.0, 2.0, 1.0, 3.0], 2);
        assert_eq!(s.quantiles[2], 2.0);
        assert_eq!(s.quantiles[1], 1.0);
        assert!((s.quantiles[0] - 0.2).abs() < 1e-15);
        assert_eq!((s.max, s.mean, s.skipped), (4.0, 2.0, 2));
    }

    #[test]
    fn activation_stats_examples() {
        let codes = vec![SparseCode::new(2, vec![(0, 2.0)]).unwrap(); 3];
        let st = activation_stats(&codes, 2, SelectionOrder::ByValue).unwrap();
        assert_eq!(st.freq, vec![1.0, 0.0]);
        assert_eq!(st.mean_value, vec![2.0, 0.0]);
        assert_eq!(st.mean_value_when_active[1], None);

        let codes = vec![SparseCode::new(8, vec![(5, 0.3), (2, 0.9)]).unwrap(); 4];
        let st = activation_stats(&codes, 8, SelectionOrder::Iteration).unwrap();
        assert_eq!(st.mean_selection_step[5], Some(1.0));
        assert_eq!(st.mean_selection_step[2], Some(2.0));
        let st = activation_stats(&codes, 8, SelectionOrder::ByValue).unwrap();
        assert_eq!(st.mean_selection_step[2], Some(1.0));

        let codes = vec![SparseCode::new(1, vec![(0, 1.0)]).unwrap(), SparseCode::empty(1)];
        let st = activation_stats(&codes, 1, SelectionOrder::Iteration).unwrap();
        assert_eq!((st.freq[0], st.mean_value[0], st.mean_value_when_active[0]), (0.5, 0.5, Some(1.0)));
        assert!(st.to_csv().starts_with("atom,freq,mean_value,mean_value_active,mean_selection_step\n0,0.5,0.5,1,1\n"));
    }

    #[test]
    fn mp_duplicates_count_once() {
        let code = SparseCode::new(2, vec![(0, 1.0), (1, 0.5), (0, 0.25)]).unwrap();
        let st = activation_stats(&[code], 2, SelectionOrder::Iteration).unwrap();
        assert_eq!(st.freq, vec![1.0, 1.0]);
        assert_eq!(st.mean_value[0], 1.25);
        assert_eq!(st.mean_selection_step[1], Some(2.0));
    }

    #[test]
    fn mp_curve_on_orthonormal_basis_reaches_zero() {
        let m = 4;
        let dict = Dictionary {
            d: DenseMatrix::identity(m),
            b_pre: DenseVector::zeros(m),
            encoder_weights: None,
            encoder_bias: None,
            thresholds: None,
        };
        let mut cfg = EncoderConfig::new(Variant::Mp, 2, m);
        cfg.mp_selection = MpSelection::Absolute;
        let x = DenseMatrix::from_row_major(2, m, vec![1.0, -2.0, 3.0, 0.5, 0.1, 0.2, 0.3, 0.4]).unwrap();
        let curve = residual_curve(&dict, &cfg, &x, 6).unwrap();
        assert!(curve.windows(2).all(|w| w[1] <= w[0]));
        assert!(curve[m - 1] < 1e-24);
        assert_eq!(curve.len(), 6);
        assert!(residual_curve_csv(&curve).starts_with("k,mean_err\n1,"));
    }
}
