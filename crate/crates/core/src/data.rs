// SPDX-License-Identifier: MIT OR Apache-2.0

//! Dataset ingestion: MNIST IDX files, synthetic ground-truth dictionaries
//! and raw activation matrices.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::container::{self, ArrayEntry, ArrayRef, Dtype};
use crate::encoder::SparseCode;
use crate::error::{Error, Result};
use crate::linalg::{dot, orthonormalize_columns, DenseMatrix, DenseVector};
use crate::rng::Rng;

pub const IDX_IMAGES_MAGIC: u32 = 2051;
pub const IDX_LABELS_MAGIC: u32 = 2049;
const ACTIVATIONS_MAGIC: &[u8; 8] = b"SDLACTS1";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Source {
    Mnist,
    Synthetic,
    Activations,
}

/// `n × m` samples with their cached column mean.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    samples: DenseMatrix,
    mean: DenseVector,
    source: Source,
}

impl Dataset {
    pub fn new(samples: DenseMatrix, source: Source) -> Result<Self> {
        if samples.rows() == 0 {
            return Err(Error::InvalidArgument("empty dataset".to_string()));
        }
        let mean = column_mean(&samples);
        Ok(Self {
            samples,
            mean,
            source,
        })
    }

    pub fn samples(&self) -> &DenseMatrix {
        &self.samples
    }

    pub fn mean(&self) -> &DenseVector {
        &self.mean
    }

    pub fn source(&self) -> Source {
        self.source
    }

    pub fn n(&self) -> usize {
        self.samples.rows()
    }

    pub fn m(&self) -> usize {
        self.samples.cols()
    }

    pub fn row(&self, i: usize) -> &[f64] {
        self.samples.row(i)
    }

    /// New dataset made of the given rows, in order.
    pub fn subset(&self, indices: &[usize]) -> Result<Dataset> {
        let m = self.m();
        let mut data = Vec::with_capacity(indices.len() * m);
        for &i in indices {
            if i >= self.n() {
                return Err(Error::IndexOutOfRange {
                    op: "Dataset::subset",
                    index: i,
                    len: self.n(),
                });
            }
            data.extend_from_slice(self.row(i));
        }
        Dataset::new(DenseMatrix::from_row_major(indices.len(), m, data)?, self.source)
    }
}

fn column_mean(samples: &DenseMatrix) -> DenseVector {
    let mut mean = vec![0.0; samples.cols()];
    for row in samples.row_iter() {
        mean.iter_mut().zip(row).for_each(|(a, v)| *a += v);
    }
    let n = samples.rows() as f64;
    mean.iter_mut().for_each(|a| *a /= n);
    mean.into()
}

fn read_file(path: &Path) -> Result<Vec<u8>> {
    std::fs::read(path).map_err(|e| Error::io(path, e))
}

fn be_u32(bytes: &[u8], at: usize, path: &str) -> Result<u32> {
    bytes
        .get(at..at + 4)
        .map(|b| u32::from_be_bytes(b.try_into().expect("4 bytes")))
        .ok_or_else(|| Error::format(path, "truncated header"))
}

/// Parses an IDX image file: returns `(n, rows·cols, pixels)`.
pub fn parse_idx_images(bytes: &[u8], path: &str) -> Result<(usize, usize, Vec<u8>)> {
    let magic = be_u32(bytes, 0, path)?;
    if magic != IDX_IMAGES_MAGIC {
        return Err(Error::format(path, format!("bad magic {magic} (expected {IDX_IMAGES_MAGIC})")));
    }
    let n = be_u32(bytes, 4, path)? as usize;
    let rows = be_u32(bytes, 8, path)? as usize;
    let cols = be_u32(bytes, 12, path)? as usize;
    let m = rows * cols;
    let payload = &bytes[16..];
    if payload.len() < n * m {
        return Err(Error::format(
            path,
            format!("truncated payload: {} bytes for {n} images of {m} pixels", payload.len()),
        ));
    }
    Ok((n, m, payload[..n * m].to_vec()))
}

pub fn parse_idx_labels(bytes: &[u8], path: &str) -> Result<Vec<u8>> {
    let magic = be_u32(bytes, 0, path)?;
    if magic != IDX_LABELS_MAGIC {
        return Err(Error::format(path, format!("bad magic {magic} (expected {IDX_LABELS_MAGIC})")));
    }
    let n = be_u32(bytes, 4, path)? as usize;
    let payload = &bytes[8..];
    if payload.len() < n {
        return Err(Error::format(path, "truncated payload"));
    }
    Ok(payload[..n].to_vec())
}

/// Loads MNIST images scaled to `[0, 1]` and flattened row-major, plus labels.
pub fn load_mnist_idx(
    images_path: impl AsRef<Path>,
    labels_path: impl AsRef<Path>,
) -> Result<(Dataset, Vec<u8>)> {
    let (ip, lp) = (images_path.as_ref(), labels_path.as_ref());
    let images = load_mnist_images(ip)?;
    let labels = parse_idx_labels(&read_file(lp)?, &lp.display().to_string())?;
    if labels.len() != images.n() {
        return Err(Error::format(
            lp.display().to_string(),
            format!("{} labels for {} images", labels.len(), images.n()),
        ));
    }
    Ok((images, labels))
}

/// Loads an IDX image file without labels.
pub fn load_mnist_images(path: impl AsRef<Path>) -> Result<Dataset> {
    let path = path.as_ref();
    let (n, m, pixels) = parse_idx_images(&read_file(path)?, &path.display().to_string())?;
    let data = pixels.iter().map(|&b| b as f64 / 255.0).collect();
    Dataset::new(DenseMatrix::from_row_major(n, m, data)?, Source::Mnist)
}

/// Serializes images (`n × rows·cols` bytes) in IDX format.
pub fn encode_idx_images(pixels: &[u8], n: usize, rows: usize, cols: usize) -> Vec<u8> {
    let mut out = Vec::with_capacity(16 + pixels.len());
    for v in [IDX_IMAGES_MAGIC, n as u32, rows as u32, cols as u32] {
        out.extend_from_slice(&v.to_be_bytes());
    }
    out.extend_from_slice(pixels);
    out
}

pub fn encode_idx_labels(labels: &[u8]) -> Vec<u8> {
    let mut out = Vec::with_capacity(8 + labels.len());
    out.extend_from_slice(&IDX_LABELS_MAGIC.to_be_bytes());
    out.extend_from_slice(&(labels.len() as u32).to_be_bytes());
    out.extend_from_slice(labels);
    out
}

/// Up to `n` indices taking classes round-robin in order of first
/// appearance, preserving file order within each class.
pub fn stratified_indices(labels: &[u8], n: usize) -> Vec<usize> {
    let mut classes: Vec<(u8, Vec<usize>)> = Vec::new();
    for (i, &l) in labels.iter().enumerate() {
        match classes.iter_mut().find(|(c, _)| *c == l) {
            Some((_, v)) => v.push(i),
            None => classes.push((l, vec![i])),
        }
    }
    let mut out = Vec::with_capacity(n.min(labels.len()));
    let mut depth = 0;
    while out.len() < n.min(labels.len()) {
        for (_, v) in &classes {
            if let Some(&i) = v.get(depth) {
                if out.len() < n {
                    out.push(i);
                }
            }
        }
        depth += 1;
    }
    out
}

/// Dictionary correlation structure for synthetic data.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase", tag = "mode")]
pub enum CoherenceMode {
    /// Orthonormal columns (requires `p_true ≤ m`).
    Orthogonal,
    /// Normalized Gaussian columns.
    Random,
    /// Groups of `block_size` atoms with pairwise correlation
    /// `within_block_coherence`.
    Block {
        block_size: usize,
        within_block_coherence: f64,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SyntheticSpec {
    pub m: usize,
    pub p_true: usize,
    pub k_true: usize,
    pub n: usize,
    pub coherence_mode: CoherenceMode,
    pub noise_sigma: f64,
    pub seed: u64,
}

/// Synthetic dataset with the dictionary and codes that generated it.
#[derive(Debug, Clone)]
pub struct SyntheticData {
    pub dataset: Dataset,
    pub dictionary: DenseMatrix,
    pub codes: Vec<SparseCode>,
}

impl SyntheticSpec {
    pub fn validate(&self) -> Result<()> {
        let mut problems = Vec::new();
        if self.m == 0 || self.p_true == 0 || self.n == 0 {
            problems.push("m, p_true and n must be positive".to_string());
        }
        if self.k_true == 0 || self.k_true > self.p_true {
            problems.push(format!("k_true = {} must be in 1..=p_true", self.k_true));
        }
        if !(self.noise_sigma >= 0.0 && self.noise_sigma.is_finite()) {
            problems.push("noise_sigma must be finite and ≥ 0".to_string());
        }
        match self.coherence_mode {
            CoherenceMode::Orthogonal if self.p_true > self.m => problems.push(format!(
                "orthogonal mode needs p_true ≤ m, got p_true = {} > m = {}",
                self.p_true, self.m
            )),
            CoherenceMode::Block {
                block_size,
                within_block_coherence: c,
            } => {
                if block_size == 0 || self.p_true % block_size != 0 {
                    problems.push(format!(
                        "block_size {block_size} must divide p_true = {}",
                        self.p_true
                    ));
                }
                if block_size + 1 > self.m {
                    problems.push(format!("block_size + 1 must be ≤ m = {}", self.m));
                }
                if !(0.0..1.0).contains(&c) {
                    problems.push(format!(
                        "infeasible within-block coherence {c}: achievable range is [0, 1)"
                    ));
                }
            }
            _ => {}
        }
        if problems.is_empty() {
            Ok(())
        } else {
            Err(Error::InvalidArgument(problems.join("; ")))
        }
    }
}

fn random_unit_columns(m: usize, p: usize, rng: &mut Rng) -> DenseMatrix {
    let mut d = DenseMatrix::zeros(m, p);
    for j in 0..p {
        let mut v = rng.normal_vec(m);
        let n = crate::linalg::norm(&v);
        v.iter_mut().for_each(|x| *x /= n);
        d.set_column(j, &v).expect("shape");
    }
    d
}

fn orthonormal_columns(m: usize, p: usize, rng: &mut Rng) -> DenseMatrix {
    loop {
        let mut d = random_unit_columns(m, p, rng);
        if orthonormalize_columns(&mut d, 1e-8) == p {
            return d;
        }
    }
}

/// Draws a ground-truth dictionary, `k_true`-sparse nonnegative codes and
/// `x = D*z + σ·ε`.
pub fn generate_synthetic(spec: &SyntheticSpec) -> Result<SyntheticData> {
    spec.validate()?;
    let mut rng = Rng::new(spec.seed);
    let (m, p) = (spec.m, spec.p_true);
    let dictionary = match spec.coherence_mode {
        CoherenceMode::Orthogonal => orthonormal_columns(m, p, &mut rng),
        CoherenceMode::Random => random_unit_columns(m, p, &mut rng),
        CoherenceMode::Block {
            block_size,
            within_block_coherence: c,
        } => {
            // Each block: √c·u + √(1−c)·v_i with {u, v_i} orthonormal, so
            // within-block inner products equal c exactly.
            let mut d = DenseMatrix::zeros(m, p);
            for block in 0..p / block_size {
                let basis = orthonormal_columns(m, block_size + 1, &mut rng);
                let base: Vec<f64> = basis.column_iter(0).collect();
                for i in 0..block_size {
                    let col: Vec<f64> = base
                        .iter()
                        .zip(basis.column_iter(i + 1))
                        .map(|(u, v)| c.sqrt() * u + (1.0 - c).sqrt() * v)
                        .collect();
                    d.set_column(block * block_size + i, &col)?;
                }
            }
            d
        }
    };

    let mut samples = DenseMatrix::zeros(spec.n, m);
    let mut codes = Vec::with_capacity(spec.n);
    for i in 0..spec.n {
        let support = rng.sample_indices(p, spec.k_true);
        let active: Vec<(usize, f64)> = support
            .into_iter()
            .map(|j| (j, rng.normal().abs() + 0.1))
            .collect();
        let row = samples.row_mut(i);
        for &(j, z) in &active {
            for (r, a) in row.iter_mut().zip(dictionary.column_iter(j)) {
                *r += z * a;
            }
        }
        if spec.noise_sigma > 0.0 {
            for r in row.iter_mut() {
                *r += spec.noise_sigma * rng.normal();
            }
        }
        codes.push(SparseCode::new(p, active)?);
    }
    Ok(SyntheticData {
        dataset: Dataset::new(samples, Source::Synthetic)?,
        dictionary,
        codes,
    })
}

#[derive(Serialize, Deserialize)]
struct ActivationHeader {
    format_version: u32,
    arrays: Vec<ArrayEntry>,
}

/// Serializes an `N × m` matrix as an activation container (array `"X"`).
pub fn encode_activation_matrix(x: &DenseMatrix, dtype: Dtype) -> Vec<u8> {
    let arrays = [ArrayRef {
        name: "X",
        rows: x.rows(),
        cols: x.cols(),
        data: x.as_slice(),
        dtype,
    }];
    let header = ActivationHeader {
        format_version: 1,
        arrays: container::layout(&arrays),
    };
    let json = serde_json::to_vec(&header).expect("header serializes");
    container::encode(ACTIVATIONS_MAGIC, &json, &arrays)
}

pub fn write_activation_matrix(path: impl AsRef<Path>, x: &DenseMatrix, dtype: Dtype) -> Result<()> {
    let path = path.as_ref();
    std::fs::write(path, encode_activation_matrix(x, dtype)).map_err(|e| Error::io(path, e))
}

/// Parses an activation container into a raw matrix.
pub fn decode_activation_matrix(bytes: &[u8], path: &str) -> Result<DenseMatrix> {
    let (json, payload) = container::split(bytes, ACTIVATIONS_MAGIC, path)?;
    let header: ActivationHeader = serde_json::from_slice(json)
        .map_err(|e| Error::format(path, format!("malformed header: {e}")))?;
    if header.format_version != 1 {
        return Err(Error::format(
            path,
            format!("version mismatch: format_version {}", header.format_version),
        ));
    }
    let entry = header
        .arrays
        .iter()
        .find(|e| e.name == "X")
        .ok_or_else(|| Error::format(path, "missing array X"))?;
    if entry.rows == 0 {
        return Err(Error::format(path, "empty dataset"));
    }
    if entry.cols == 0 {
        return Err(Error::format(path, "bad shape: zero columns"));
    }
    let data = container::read_array(payload, entry, path)?;
    DenseMatrix::from_row_major(entry.rows, entry.cols, data)
}

/// Loads externally dumped activations without rescaling.
pub fn load_activation_matrix(path: impl AsRef<Path>) -> Result<Dataset> {
    let path = path.as_ref();
    let x = decode_activation_matrix(&read_file(path)?, &path.display().to_string())?;
    Dataset::new(x, Source::Activations)
}

/// True when `bytes` start with the activation-container magic.
pub fn is_activation_container(bytes: &[u8]) -> bool {
    bytes.starts_with(ACTIVATIONS_MAGIC)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RecoveryScore {
    /// Share of true atoms matched with `|cos| ≥ threshold`.
    pub matched_fraction: f64,
    /// Mean over true atoms of the best `|cos|` against any learned atom.
    pub mean_best_cosine: f64,
}

/// Greedy one-to-one matching of learned to true atoms on `|cos|`,
/// highest pairs first.
pub fn recovery_score(learned: &DenseMatrix, truth: &DenseMatrix, threshold: f64) -> Result<RecoveryScore> {
    if learned.rows() != truth.rows() {
        return Err(Error::DimensionMismatch {
            op: "recovery_score",
            left: learned.shape(),
            right: truth.shape(),
        });
    }
    let (pl, pt) = (learned.cols(), truth.cols());
    if pt == 0 {
        return Err(Error::InvalidArgument("ground truth has no atoms".to_string()));
    }
    let lt = learned.transpose();
    let tt = truth.transpose();
    let mut pairs = Vec::with_capacity(pl * pt);
    let mut best = vec![0.0f64; pt];
    for t in 0..pt {
        for l in 0..pl {
            let c = dot(tt.row(t), lt.row(l)).abs();
            best[t] = best[t].max(c);
            pairs.push((c, t, l));
        }
    }
    pairs.sort_by(|a, b| {
        b.0.partial_cmp(&a.0)
            .unwrap_or(std::cmp::Ordering::Equal)
            .then(a.1.cmp(&b.1))
            .then(a.2.cmp(&b.2))
    });
    let mut used_t = vec![false; pt];
    let mut used_l = vec![false; pl];
    let mut matched = 0usize;
    for (c, t, l) in pairs {
        if used_t[t] || used_l[l] {
            continue;
        }
        used_t[t] = true;
        used_l[l] = true;
        if c >= threshold {
            matched += 1;
        }
    }
    Ok(RecoveryScore {
        matched_fraction: matched as f64 / pt as f64,
        mean_best_cosine: best.iter().sum::<f64>() / pt as f64,
    })
}
