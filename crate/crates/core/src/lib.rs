// SPDX-License-Identifier: MIT OR Apache-2.0

//! Sparse dictionary learning workbench.
//!
//! Trains and evaluates five sparse autoencoder variants on a shared
//! dictionary model:
//!
//! - one-shot shallow encoders `z = σ(Wᵀ(x − b_pre) + b)` with σ one of
//!   ReLU, JumpReLU, TopK and BatchTopK;
//! - the matching-pursuit SAE, whose encoder is `T` unrolled matching
//!   pursuit iterations using the decoder itself as the correlation filter.
//!
//! Modules follow the data flow: [`linalg`] and [`rng`] are the numeric
//! substrate, [`dictionary`] owns parameters and checkpoints, [`encoder`]
//! runs inference, [`trainer`] computes losses, gradients and optimizer
//! steps, [`metrics`] evaluates, and [`data`] ingests datasets.

pub mod container;
pub mod data;
pub mod dictionary;
pub mod encoder;
pub mod error;
pub mod linalg;
pub mod metrics;
pub mod rng;
pub mod trainer;

pub use dictionary::{Dictionary, EncoderConfig, MpSelection, Variant};
pub use encoder::{InferenceTrace, SparseCode};
pub use error::{Error, Result};
pub use linalg::{DenseMatrix, DenseVector};
pub use rng::Rng;
