// SPDX-License-Identifier: MIT OR Apache-2.0

//! Minimal dense linear algebra over `f64`.
//!
//! Matrices are row-major. A dictionary `D ∈ ℝ^{m×p}` is stored with one
//! row per input dimension, so `Dᵀr` is computed as a sum of scaled rows,
//! which keeps the inner loop contiguous.

use std::ops::{Deref, DerefMut, Index, IndexMut};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Owned dense vector of `f64`.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(transparent)]
pub struct DenseVector {
    data: Vec<f64>,
}

impl DenseVector {
    pub fn zeros(len: usize) -> Self {
        Self {
            data: vec![0.0; len],
        }
    }

    pub fn from_vec(data: Vec<f64>) -> Self {
        Self { data }
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.data
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn norm(&self) -> f64 {
        norm(&self.data)
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }
}

impl From<Vec<f64>> for DenseVector {
    fn from(data: Vec<f64>) -> Self {
        Self { data }
    }
}

impl From<&[f64]> for DenseVector {
    fn from(data: &[f64]) -> Self {
        Self {
            data: data.to_vec(),
        }
    }
}

impl Deref for DenseVector {
    type Target = [f64];

    fn deref(&self) -> &[f64] {
        &self.data
    }
}

impl DerefMut for DenseVector {
    fn deref_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }
}

/// Owned row-major dense matrix of `f64`.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseMatrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl DenseMatrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m[(i, i)] = 1.0;
        }
        m
    }

    /// Builds a matrix from row-major data.
    pub fn from_row_major(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::DimensionMismatch {
                op: "from_row_major",
                left: (rows, cols),
                right: (data.len(), 1),
            });
        }
        Ok(Self { rows, cols, data })
    }

    /// Builds a matrix whose columns are the given vectors.
    pub fn from_columns(columns: &[&[f64]]) -> Result<Self> {
        let cols = columns.len();
        let rows = columns.first().map_or(0, |c| c.len());
        let mut m = Self::zeros(rows, cols);
        for (j, c) in columns.iter().enumerate() {
            if c.len() != rows {
                return Err(Error::DimensionMismatch {
                    op: "from_columns",
                    left: (rows, 1),
                    right: (c.len(), 1),
                });
            }
            for (i, v) in c.iter().enumerate() {
                m[(i, j)] = *v;
            }
        }
        Ok(m)
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.data
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn row_mut(&mut self, i: usize) -> &mut [f64] {
        &mut self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn row_iter(&self) -> impl Iterator<Item = &[f64]> {
        // chunks_exact(0) panics, and a zero-column matrix has no data anyway
        self.data.chunks_exact(self.cols.max(1)).take(self.rows)
    }

    /// Copy of column `j`.
    pub fn column(&self, j: usize) -> Result<DenseVector> {
        if j >= self.cols {
            return Err(Error::IndexOutOfRange {
                op: "column",
                index: j,
                len: self.cols,
            });
        }
        Ok(self.column_iter(j).collect::<Vec<_>>().into())
    }

    /// Strided iterator over column `j`. Panics if `j` is out of range.
    pub fn column_iter(&self, j: usize) -> impl Iterator<Item = f64> + '_ {
        assert!(j < self.cols, "column {j} out of range ({})", self.cols);
        self.data[j..].iter().step_by(self.cols).copied()
    }

    pub fn set_column(&mut self, j: usize, values: &[f64]) -> Result<()> {
        if j >= self.cols {
            return Err(Error::IndexOutOfRange {
                op: "set_column",
                index: j,
                len: self.cols,
            });
        }
        if values.len() != self.rows {
            return Err(Error::DimensionMismatch {
                op: "set_column",
                left: (self.rows, 1),
                right: (values.len(), 1),
            });
        }
        for (i, v) in values.iter().enumerate() {
            self.data[i * self.cols + j] = *v;
        }
        Ok(())
    }

    /// `ℓ₂` norm of every column.
    pub fn column_norms(&self) -> Vec<f64> {
        let mut sq = vec![0.0; self.cols];
        for row in self.row_iter() {
            for (s, v) in sq.iter_mut().zip(row) {
                *s += v * v;
            }
        }
        sq.into_iter().map(f64::sqrt).collect()
    }

    /// Dot product of column `j` with `v` (length `rows`).
    pub fn column_dot(&self, j: usize, v: &[f64]) -> f64 {
        self.column_iter(j).zip(v).map(|(a, b)| a * b).sum()
    }

    /// `y += alpha · M[:, j]`.
    pub fn add_scaled_column(&self, j: usize, alpha: f64, y: &mut [f64]) {
        for (yi, a) in y.iter_mut().zip(self.column_iter(j)) {
            *yi += alpha * a;
        }
    }

    pub fn transpose(&self) -> DenseMatrix {
        let mut t = DenseMatrix::zeros(self.cols, self.rows);
        for i in 0..self.rows {
            for j in 0..self.cols {
                t.data[j * self.rows + i] = self.data[i * self.cols + j];
            }
        }
        t
    }

    /// `M v`.
    pub fn matvec(&self, v: &[f64]) -> Result<DenseVector> {
        if v.len() != self.cols {
            return Err(Error::DimensionMismatch {
                op: "matvec",
                left: self.shape(),
                right: (v.len(), 1),
            });
        }
        Ok(self.row_iter().map(|row| dot(row, v)).collect::<Vec<_>>().into())
    }

    /// `Mᵀ v`.
    pub fn matvec_transposed(&self, v: &[f64]) -> Result<DenseVector> {
        let mut out = vec![0.0; self.cols];
        self.matvec_transposed_into(v, &mut out)?;
        Ok(out.into())
    }

    /// `out = Mᵀ v`, accumulated row by row in a fixed order.
    pub fn matvec_transposed_into(&self, v: &[f64], out: &mut [f64]) -> Result<()> {
        if v.len() != self.rows || out.len() != self.cols {
            return Err(Error::DimensionMismatch {
                op: "matvec_transposed",
                left: self.shape(),
                right: (v.len(), 1),
            });
        }
        out.fill(0.0);
        for (row, &vi) in self.row_iter().zip(v) {
            if vi == 0.0 {
                continue;
            }
            for (o, a) in out.iter_mut().zip(row) {
                *o += a * vi;
            }
        }
        Ok(())
    }

    /// Gram matrix `MᵀM` (cols × cols).
    pub fn gram(&self) -> DenseMatrix {
        let mut g = DenseMatrix::zeros(self.cols, self.cols);
        for row in self.row_iter() {
            for (a, &ra) in row.iter().enumerate() {
                if ra == 0.0 {
                    continue;
                }
                let grow = &mut g.data[a * self.cols..(a + 1) * self.cols];
                for (gv, rb) in grow.iter_mut().zip(row) {
                    *gv += ra * rb;
                }
            }
        }
        g
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }
}

impl Index<(usize, usize)> for DenseMatrix {
    type Output = f64;

    fn index(&self, (i, j): (usize, usize)) -> &f64 {
        debug_assert!(i < self.rows && j < self.cols);
        &self.data[i * self.cols + j]
    }
}

impl IndexMut<(usize, usize)> for DenseMatrix {
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut f64 {
        debug_assert!(i < self.rows && j < self.cols);
        &mut self.data[i * self.cols + j]
    }
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn norm_sq(a: &[f64]) -> f64 {
    dot(a, a)
}

pub fn norm(a: &[f64]) -> f64 {
    norm_sq(a).sqrt()
}

/// Returns `y + alpha·x`.
pub fn axpy(alpha: f64, x: &[f64], y: &[f64]) -> Result<DenseVector> {
    if x.len() != y.len() {
        return Err(Error::DimensionMismatch {
            op: "axpy",
            left: (x.len(), 1),
            right: (y.len(), 1),
        });
    }
    Ok(x.iter()
        .zip(y)
        .map(|(xi, yi)| yi + alpha * xi)
        .collect::<Vec<_>>()
        .into())
}

/// `y += alpha·x` in place. Lengths must agree.
pub(crate) fn axpy_in_place(alpha: f64, x: &[f64], y: &mut [f64]) {
    debug_assert_eq!(x.len(), y.len());
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += alpha * xi;
    }
}

/// Central finite-difference gradient of `f` at `x0` with step `h`.
pub fn finite_difference_gradient<F>(f: F, x0: &[f64], h: f64) -> Result<DenseVector>
where
    F: Fn(&[f64]) -> f64,
{
    if !(h > 0.0 && h.is_finite()) {
        return Err(Error::InvalidArgument(format!(
            "finite difference step must be positive, got {h}"
        )));
    }
    let mut x = x0.to_vec();
    let mut grad = Vec::with_capacity(x0.len());
    for i in 0..x0.len() {
        let orig = x[i];
        x[i] = orig + h;
        let plus = f(&x);
        x[i] = orig - h;
        let minus = f(&x);
        x[i] = orig;
        if !plus.is_finite() || !minus.is_finite() {
            return Err(Error::NonFinite {
                context: format!("finite difference at coordinate {i}"),
            });
        }
        grad.push((plus - minus) / (2.0 * h));
    }
    Ok(grad.into())
}

/// Orthonormalizes the columns of `m` in place by modified Gram-Schmidt
/// with one re-orthogonalization pass. Returns the number of independent
/// columns found; dependent columns (relative norm below `tol`) are zeroed.
pub fn orthonormalize_columns(m: &mut DenseMatrix, tol: f64) -> usize {
    let (rows, cols) = m.shape();
    let mut basis: Vec<Vec<f64>> = Vec::with_capacity(cols.min(rows));
    let mut rank = 0;
    for j in 0..cols {
        let mut v: Vec<f64> = m.column_iter(j).collect();
        let start = norm(&v);
        for _ in 0..2 {
            for q in &basis {
                let c = dot(q, &v);
                axpy_in_place(-c, q, &mut v);
            }
        }
        let n = norm(&v);
        if start > 0.0 && n > tol * start {
            v.iter_mut().for_each(|x| *x /= n);
            rank += 1;
            basis.push(v.clone());
        } else {
            v.fill(0.0);
        }
        m.set_column(j, &v).expect("column shape");
    }
    rank
}

#[cfg(test)]
mod tests {
    use super::*;

    fn two_atom() -> DenseMatrix {
        DenseMatrix::from_columns(&[&[1.0, 0.0], &[0.6, 0.8]]).unwrap()
    }

    #[test]
    fn matvec_transposed_examples() {
        let id = DenseMatrix::identity(2);
        assert_eq!(id.matvec_transposed(&[0.3, 0.8]).unwrap().as_slice(), &[0.3, 0.8]);

        // naive double loop
        let m = two_atom();
        let v = [1.0, 1.0];
        let mut oracle = [0.0; 2];
        for j in 0..2 {
            for i in 0..2 {
                oracle[j] += m[(i, j)] * v[i];
            }
        }
        let got = m.matvec_transposed(&v).unwrap();
        assert!((got[0] - oracle[0]).abs() < 1e-15 && (got[1] - oracle[1]).abs() < 1e-15);
        assert!((got[0] - 1.0).abs() < 1e-15 && (got[1] - 1.4).abs() < 1e-15);

        let z = DenseMatrix::zeros(2, 3);
        assert_eq!(z.matvec_transposed(&[5.0, -5.0]).unwrap().as_slice(), &[0.0; 3]);
    }

    #[test]
    fn matvec_transposed_rejects_bad_shape() {
        let err = DenseMatrix::zeros(2, 3).matvec_transposed(&[1.0; 3]).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("(2, 3)") && msg.contains("(3, 1)"), "{msg}");
    }

    #[test]
    fn column_examples() {
        let id = DenseMatrix::identity(2);
        assert_eq!(id.column(0).unwrap().as_slice(), &[1.0, 0.0]);
        assert_eq!(id.column(1).unwrap().as_slice(), &[0.0, 1.0]);
        assert_eq!(two_atom().column(1).unwrap().as_slice(), &[0.6, 0.8]);
        assert!(matches!(id.column(2), Err(Error::IndexOutOfRange { .. })));
    }

    #[test]
    fn axpy_examples() {
        assert_eq!(axpy(0.0, &[7.0, -3.0], &[1.0, 2.0]).unwrap().as_slice(), &[1.0, 2.0]);
        let r = axpy(-1.4, &[0.6, 0.8], &[1.0, 1.0]).unwrap();
        assert!((r[0] - 0.16).abs() < 1e-15 && (r[1] + 0.12).abs() < 1e-15);
        assert_eq!(axpy(1.0, &[1.0, 1.0], &[-1.0, -1.0]).unwrap().as_slice(), &[0.0, 0.0]);
        assert!(axpy(1.0, &[1.0], &[1.0, 2.0]).is_err());
    }

    #[test]
    fn finite_difference_examples() {
        let g = finite_difference_gradient(|x| norm_sq(x), &[1.0, 2.0], 1e-5).unwrap();
        assert!((g[0] - 2.0).abs() < 1e-6 && (g[1] - 4.0).abs() < 1e-6);

        let g = finite_difference_gradient(|_| 3.5, &[0.3, -9.0, 4.0], 1e-5).unwrap();
        assert!(g.iter().all(|v| v.abs() < 1e-9));

        let g = finite_difference_gradient(|x| x[0] * x[1], &[3.0, 5.0], 1e-5).unwrap();
        assert!((g[0] - 5.0).abs() < 1e-6 && (g[1] - 3.0).abs() < 1e-6);
    }

    #[test]
    fn finite_difference_reports_coordinate() {
        let err = finite_difference_gradient(
            |x| if x[1] > 1.0 { f64::NAN } else { x[0] },
            &[0.0, 1.0],
            1e-3,
        )
        .unwrap_err();
        assert!(err.to_string().contains("coordinate 1"), "{err}");
        assert!(finite_difference_gradient(|x| x[0], &[0.0], 0.0).is_err());
    }

    #[test]
    fn gram_and_norms() {
        let m = two_atom();
        let g = m.gram();
        assert!((g[(0, 1)] - 0.6).abs() < 1e-15 && (g[(1, 0)] - 0.6).abs() < 1e-15);
        let n = m.column_norms();
        assert!((n[0] - 1.0).abs() < 1e-15 && (n[1] - 1.0).abs() < 1e-15);
    }

    #[test]
    fn gram_schmidt_detects_rank() {
        let mut m =
            DenseMatrix::from_columns(&[&[1.0, 1.0, 0.0], &[2.0, 2.0, 0.0], &[0.0, 1.0, 1.0]])
                .unwrap();
        assert_eq!(orthonormalize_columns(&mut m, 1e-10), 2);
        assert!(m.column_iter(1).all(|v| v == 0.0));
        assert!(m.column_dot(0, &m.column(2).unwrap()).abs() < 1e-14);
    }
}
