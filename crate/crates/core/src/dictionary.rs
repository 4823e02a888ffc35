// SPDX-License-Identifier: MIT OR Apache-2.0

//! Learned parameters and their persistence.
//!
//! A [`Dictionary`] holds the decoder `D` (m × p, unit-norm columns), the
//! pre-bias `b_pre`, and for shallow encoders the untied encoder `(W, b)`
//! plus JumpReLU thresholds `θ`. The MP encoder reuses `D` as its
//! correlation filter and carries no encoder parameters.

use std::fmt;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::container::{self, ArrayEntry, ArrayRef, Dtype};
use crate::error::{Error, Result};
use crate::linalg::{DenseMatrix, DenseVector};
use crate::rng::Rng;

/// Tolerance on `|‖D_j‖ − 1|` for a dictionary to count as normalized.
pub const NORM_TOLERANCE: f64 = 1e-8;

/// Initial JumpReLU threshold for every atom.
pub const INITIAL_THRESHOLD: f64 = 0.001;

const CHECKPOINT_MAGIC: &[u8; 8] = b"SDLCKPT1";
const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Variant {
    Relu,
    JumpRelu,
    TopK,
    BatchTopK,
    Mp,
}

impl Variant {
    pub const ALL: [Variant; 5] = [
        Variant::Relu,
        Variant::JumpRelu,
        Variant::TopK,
        Variant::BatchTopK,
        Variant::Mp,
    ];

    /// One-shot encoder with its own `(W, b)`.
    pub fn is_shallow(self) -> bool {
        !matches!(self, Variant::Mp)
    }

    /// Variants whose sparsity is set by `k`.
    pub fn uses_k(self) -> bool {
        matches!(self, Variant::TopK | Variant::BatchTopK | Variant::Mp)
    }

    pub fn name(self) -> &'static str {
        match self {
            Variant::Relu => "relu",
            Variant::JumpRelu => "jumprelu",
            Variant::TopK => "topk",
            Variant::BatchTopK => "batchtopk",
            Variant::Mp => "mp",
        }
    }
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Variant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Variant::ALL
            .into_iter()
            .find(|v| v.name() == s.to_ascii_lowercase())
            .ok_or_else(|| {
                Error::InvalidArgument(format!(
                    "unknown variant {s:?} (expected relu, jumprelu, topk, batchtopk or mp)"
                ))
            })
    }
}

/// Atom selection rule of the MP encoder.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MpSelection {
    /// `argmax_j (Dᵀr)_j`.
    #[default]
    Signed,
    /// `argmax_j |(Dᵀr)_j|`, the classical matching pursuit rule.
    Absolute,
}

impl FromStr for MpSelection {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "signed" => Ok(MpSelection::Signed),
            "absolute" | "abs" => Ok(MpSelection::Absolute),
            _ => Err(Error::InvalidArgument(format!(
                "unknown MP selection {s:?} (expected signed or absolute)"
            ))),
        }
    }
}

/// Encoder variant and its hyperparameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EncoderConfig {
    pub variant: Variant,
    /// Target sparsity for TopK/BatchTopK, number of MP steps `T`.
    pub k: usize,
    /// `ℓ₁` weight (ReLU).
    pub lambda: f64,
    /// Weight of the `ℓ₀` penalty (JumpReLU).
    pub target_l0: f64,
    pub aux_alpha: f64,
    pub aux_k: usize,
    /// Optimizer steps without activation after which an atom is dead.
    pub dead_steps_threshold: u64,
    /// Width of the rectangular straight-through kernel (JumpReLU).
    pub ste_bandwidth: f64,
    pub mp_selection: MpSelection,
    /// Treat `r⁽ᵗ⁻¹⁾` as a constant in `z⁽ᵗ⁾ = D_jᵀ r⁽ᵗ⁻¹⁾` during backprop.
    pub detach_residual: bool,
}

impl EncoderConfig {
    /// Defaults for `variant` at sparsity `k` on a dictionary of `p` atoms.
    ///
    /// The auxiliary loss is on for TopK, BatchTopK and JumpReLU
    /// (`α = 1/32`, `aux_k = min(2k, p/2)`), off for ReLU and MP.
    pub fn new(variant: Variant, k: usize, p: usize) -> Self {
        let aux_alpha = match variant {
            Variant::TopK | Variant::BatchTopK | Variant::JumpRelu => 1.0 / 32.0,
            Variant::Relu | Variant::Mp => 0.0,
        };
        Self {
            variant,
            k,
            lambda: 0.1,
            target_l0: 0.1,
            aux_alpha,
            aux_k: (2 * k).min(p / 2).max(1),
            dead_steps_threshold: 100,
            ste_bandwidth: 0.001,
            mp_selection: MpSelection::Signed,
            detach_residual: false,
        }
    }

    /// Checks the configuration against a dictionary with `p` atoms.
    pub fn validate(&self, p: usize) -> Result<()> {
        let mut problems = Vec::new();
        if self.variant.uses_k() && self.k < 1 {
            problems.push("k ≥ 1 required".to_string());
        }
        if self.variant.uses_k() && self.k > p {
            problems.push(format!("k = {} exceeds atom count p = {p}", self.k));
        }
        for (name, v) in [
            ("lambda", self.lambda),
            ("target_l0", self.target_l0),
            ("aux_alpha", self.aux_alpha),
            ("ste_bandwidth", self.ste_bandwidth),
        ] {
            if !(v >= 0.0 && v.is_finite()) {
                problems.push(format!("{name} must be finite and ≥ 0, got {v}"));
            }
        }
        if self.variant == Variant::JumpRelu && self.ste_bandwidth <= 0.0 {
            problems.push("ste_bandwidth must be > 0 for jumprelu".to_string());
        }
        if self.aux_alpha > 0.0 && (self.aux_k == 0 || self.aux_k > p) {
            problems.push(format!("aux_k = {} must be in 1..={p}", self.aux_k));
        }
        if problems.is_empty() {
            Ok(())
        } else {
            Err(Error::Invariant(problems))
        }
    }
}

/// Per-column report from [`Dictionary::renormalize_columns`].
#[derive(Debug, Clone, PartialEq)]
pub struct NormReport {
    pub old_norms: Vec<f64>,
    /// Columns whose norm was below `1e-12` and were replaced by `e_{j mod m}`.
    pub replaced: Vec<usize>,
}

/// Model parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct Dictionary {
    /// Decoder, m × p.
    pub d: DenseMatrix,
    pub b_pre: DenseVector,
    /// Encoder `W` (m × p), shallow variants only.
    pub encoder_weights: Option<DenseMatrix>,
    pub encoder_bias: Option<DenseVector>,
    /// JumpReLU thresholds `θ ≥ 0`.
    pub thresholds: Option<DenseVector>,
}

impl Dictionary {
    /// Gaussian columns normalized to unit length, `b_pre = data_mean`,
    /// `W = D`, `b = 0`, `θ = 0.001`.
    pub fn init(
        m: usize,
        p: usize,
        variant: Variant,
        data_mean: &[f64],
        rng: &mut Rng,
    ) -> Result<Self> {
        if m == 0 || p == 0 {
            return Err(Error::InvalidArgument(format!(
                "dictionary dimensions must be positive, got m = {m}, p = {p}"
            )));
        }
        if data_mean.len() != m {
            return Err(Error::DimensionMismatch {
                op: "init_dictionary",
                left: (m, p),
                right: (data_mean.len(), 1),
            });
        }
        // Draw column by column so the stream does not depend on storage order.
        let mut d = DenseMatrix::zeros(m, p);
        for j in 0..p {
            let col = rng.normal_vec(m);
            d.set_column(j, &col)?;
        }
        let mut dict = Dictionary {
            d,
            b_pre: DenseVector::from(data_mean),
            encoder_weights: None,
            encoder_bias: None,
            thresholds: None,
        };
        dict.renormalize_columns();
        if variant.is_shallow() {
            dict.encoder_weights = Some(dict.d.clone());
            dict.encoder_bias = Some(DenseVector::zeros(p));
        }
        if variant == Variant::JumpRelu {
            dict.thresholds = Some(DenseVector::from(vec![INITIAL_THRESHOLD; p]));
        }
        Ok(dict)
    }

    /// Input dimension.
    pub fn m(&self) -> usize {
        self.d.rows()
    }

    /// Atom count.
    pub fn p(&self) -> usize {
        self.d.cols()
    }

    /// Scales every column of `D` to unit norm.
    pub fn renormalize_columns(&mut self) -> NormReport {
        let (m, p) = self.d.shape();
        let old_norms = self.d.column_norms();
        let mut replaced = Vec::new();
        let inv: Vec<f64> = old_norms
            .iter()
            .enumerate()
            .map(|(j, &n)| {
                if n < 1e-12 {
                    replaced.push(j);
                    0.0
                } else {
                    1.0 / n
                }
            })
            .collect();
        for i in 0..m {
            for (v, s) in self.d.row_mut(i).iter_mut().zip(&inv) {
                *v *= s;
            }
        }
        for &j in &replaced {
            let mut e = vec![0.0; m];
            e[j % m] = 1.0;
            self.d.set_column(j, &e).expect("column in range");
        }
        debug_assert_eq!(old_norms.len(), p);
        NormReport {
            old_norms,
            replaced,
        }
    }

    /// Largest `|‖D_j‖ − 1|` over columns.
    pub fn max_norm_deviation(&self) -> f64 {
        self.d
            .column_norms()
            .iter()
            .map(|n| (n - 1.0).abs())
            .fold(0.0, f64::max)
    }

    pub fn is_normalized(&self) -> bool {
        self.max_norm_deviation() < NORM_TOLERANCE
    }

    /// Clamps JumpReLU thresholds at zero.
    pub fn project_thresholds(&mut self) {
        if let Some(t) = self.thresholds.as_mut() {
            t.iter_mut().for_each(|v| *v = v.max(0.0));
        }
    }

    /// All structural invariant violations against `cfg`.
    pub fn violations(&self, cfg: &EncoderConfig) -> Vec<String> {
        let (m, p) = self.d.shape();
        let mut out = Vec::new();
        if m == 0 {
            out.push("m must be ≥ 1".to_string());
        }
        if p == 0 {
            out.push("p must be ≥ 1".to_string());
        }
        if self.b_pre.len() != m {
            out.push(format!("b_pre has length {} but m = {m}", self.b_pre.len()));
        }
        let shallow = cfg.variant.is_shallow();
        match (&self.encoder_weights, shallow) {
            (Some(_), false) => {
                out.push(format!("variant {} must not carry encoder weights", cfg.variant))
            }
            (None, true) => out.push(format!("variant {} requires encoder weights", cfg.variant)),
            (Some(w), true) if w.shape() != (m, p) => {
                out.push(format!("W has shape {:?}, expected {:?}", w.shape(), (m, p)))
            }
            _ => {}
        }
        match (&self.encoder_bias, shallow) {
            (Some(_), false) => {
                out.push(format!("variant {} must not carry an encoder bias", cfg.variant))
            }
            (None, true) => out.push(format!("variant {} requires an encoder bias", cfg.variant)),
            (Some(b), true) if b.len() != p => {
                out.push(format!("b has length {}, expected {p}", b.len()))
            }
            _ => {}
        }
        let jump = cfg.variant == Variant::JumpRelu;
        match (&self.thresholds, jump) {
            (Some(_), false) => {
                out.push(format!("variant {} must not carry thresholds", cfg.variant))
            }
            (None, true) => out.push("jumprelu requires thresholds".to_string()),
            (Some(t), true) => {
                if t.len() != p {
                    out.push(format!("theta has length {}, expected {p}", t.len()));
                }
                if let Some(j) = t.iter().position(|v| !(*v >= 0.0)) {
                    out.push(format!("theta[{j}] = {} is negative", t[j]));
                }
            }
            _ => {}
        }
        if p > 0 && m > 0 {
            let norms = self.d.column_norms();
            if let Some((j, n)) = norms
                .iter()
                .enumerate()
                .find(|(_, n)| !((*n - 1.0).abs() < NORM_TOLERANCE))
            {
                out.push(format!(
                    "column {j} has norm {n} (max deviation {:e})",
                    self.max_norm_deviation()
                ));
            }
        }
        if let Err(Error::Invariant(v)) = cfg.validate(p.max(1)) {
            out.extend(v);
        }
        out
    }
}

/// Training metadata stored in a checkpoint header.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct CheckpointMeta {
    pub seed: u64,
    pub train_steps: u64,
    pub epochs: usize,
}

#[derive(Serialize, Deserialize)]
struct CheckpointHeader {
    format_version: u32,
    m: usize,
    p: usize,
    variant: Variant,
    k: usize,
    lambda: f64,
    target_l0: f64,
    aux_alpha: f64,
    aux_k: usize,
    ste_bandwidth: f64,
    seed: u64,
    #[serde(default = "default_dead_steps")]
    dead_steps_threshold: u64,
    #[serde(default)]
    mp_selection: MpSelection,
    #[serde(default)]
    detach_residual: bool,
    #[serde(default)]
    train_steps: u64,
    #[serde(default)]
    epochs: usize,
    arrays: Vec<ArrayEntry>,
}

fn default_dead_steps() -> u64 {
    100
}

/// Serializes a checkpoint to bytes. Refuses unnormalized dictionaries.
pub fn encode_checkpoint(
    dict: &Dictionary,
    cfg: &EncoderConfig,
    meta: &CheckpointMeta,
) -> Result<Vec<u8>> {
    let problems = dict.violations(cfg);
    if !problems.is_empty() {
        return Err(Error::Invariant(problems));
    }
    let (m, p) = dict.d.shape();
    let mut arrays = vec![
        ArrayRef {
            name: "D",
            rows: m,
            cols: p,
            data: dict.d.as_slice(),
            dtype: Dtype::F64,
        },
        ArrayRef {
            name: "b_pre",
            rows: 1,
            cols: m,
            data: dict.b_pre.as_slice(),
            dtype: Dtype::F64,
        },
    ];
    if let Some(w) = &dict.encoder_weights {
        arrays.push(ArrayRef {
            name: "W",
            rows: m,
            cols: p,
            data: w.as_slice(),
            dtype: Dtype::F64,
        });
    }
    if let Some(b) = &dict.encoder_bias {
        arrays.push(ArrayRef {
            name: "b",
            rows: 1,
            cols: p,
            data: b.as_slice(),
            dtype: Dtype::F64,
        });
    }
    if let Some(t) = &dict.thresholds {
        arrays.push(ArrayRef {
            name: "theta",
            rows: 1,
            cols: p,
            data: t.as_slice(),
            dtype: Dtype::F64,
        });
    }
    let header = CheckpointHeader {
        format_version: FORMAT_VERSION,
        m,
        p,
        variant: cfg.variant,
        k: cfg.k,
        lambda: cfg.lambda,
        target_l0: cfg.target_l0,
        aux_alpha: cfg.aux_alpha,
        aux_k: cfg.aux_k,
        ste_bandwidth: cfg.ste_bandwidth,
        seed: meta.seed,
        dead_steps_threshold: cfg.dead_steps_threshold,
        mp_selection: cfg.mp_selection,
        detach_residual: cfg.detach_residual,
        train_steps: meta.train_steps,
        epochs: meta.epochs,
        arrays: container::layout(&arrays),
    };
    let json = serde_json::to_vec(&header).expect("header serializes");
    Ok(container::encode(CHECKPOINT_MAGIC, &json, &arrays))
}

/// Parses checkpoint bytes. `path` is used in error messages only.
pub fn decode_checkpoint(
    bytes: &[u8],
    path: &str,
) -> Result<(Dictionary, EncoderConfig, CheckpointMeta)> {
    let (json, payload) = container::split(bytes, CHECKPOINT_MAGIC, path)?;
    let header: CheckpointHeader = serde_json::from_slice(json)
        .map_err(|e| Error::format(path, format!("malformed header: {e}")))?;
    if header.format_version != FORMAT_VERSION {
        return Err(Error::format(
            path,
            format!(
                "version mismatch: file has format_version {}, expected {FORMAT_VERSION}",
                header.format_version
            ),
        ));
    }
    let (m, p) = (header.m, header.p);
    let mut problems = Vec::new();
    if m == 0 {
        problems.push("header declares m = 0".to_string());
    }
    if p == 0 {
        problems.push("header declares p = 0".to_string());
    }
    if !problems.is_empty() {
        return Err(Error::Invariant(problems));
    }

    let find = |name: &str| header.arrays.iter().find(|e| e.name == name);
    let load = |name: &str, rows: usize, cols: usize| -> Result<Option<Vec<f64>>> {
        match find(name) {
            None => Ok(None),
            Some(e) => {
                if (e.rows, e.cols) != (rows, cols) {
                    return Err(Error::Invariant(vec![format!(
                        "array {name} has shape {:?}, expected {:?}",
                        (e.rows, e.cols),
                        (rows, cols)
                    )]));
                }
                container::read_array(payload, e, path).map(Some)
            }
        }
    };
    let d = load("D", m, p)?
        .ok_or_else(|| Error::format(path, "missing array D"))
        .and_then(|v| DenseMatrix::from_row_major(m, p, v))?;
    let b_pre = load("b_pre", 1, m)?
        .ok_or_else(|| Error::format(path, "missing array b_pre"))?
        .into();
    let encoder_weights = load("W", m, p)?
        .map(|v| DenseMatrix::from_row_major(m, p, v))
        .transpose()?;
    let encoder_bias = load("b", 1, p)?.map(DenseVector::from);
    let thresholds = load("theta", 1, p)?.map(DenseVector::from);

    let dict = Dictionary {
        d,
        b_pre,
        encoder_weights,
        encoder_bias,
        thresholds,
    };
    let cfg = EncoderConfig {
        variant: header.variant,
        k: header.k,
        lambda: header.lambda,
        target_l0: header.target_l0,
        aux_alpha: header.aux_alpha,
        aux_k: header.aux_k,
        dead_steps_threshold: header.dead_steps_threshold,
        ste_bandwidth: header.ste_bandwidth,
        mp_selection: header.mp_selection,
        detach_residual: header.detach_residual,
    };
    let problems = dict.violations(&cfg);
    if !problems.is_empty() {
        return Err(Error::Invariant(problems));
    }
    let meta = CheckpointMeta {
        seed: header.seed,
        train_steps: header.train_steps,
        epochs: header.epochs,
    };
    Ok((dict, cfg, meta))
}

pub fn save_checkpoint(
    dict: &Dictionary,
    cfg: &EncoderConfig,
    meta: &CheckpointMeta,
    path: impl AsRef<Path>,
) -> Result<()> {
    let path = path.as_ref();
    let bytes = encode_checkpoint(dict, cfg, meta)?;
    std::fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

pub fn load_checkpoint(path: impl AsRef<Path>) -> Result<(Dictionary, EncoderConfig, CheckpointMeta)> {
    let path = path.as_ref();
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_checkpoint(&bytes, &path.display().to_string())
}
