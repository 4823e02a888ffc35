// SPDX-License-Identifier: MIT OR Apache-2.0

//! Analytic gradients against central finite differences of the loss.
//!
//! Instances are rejected when any discrete choice (ReLU sign, threshold,
//! top-k boundary, MP argmax, auxiliary selection) sits within a fixed margin
//! of flipping, so the finite-difference stencil never crosses a kink.

mod oracles;

use oracles::gradient_check;
use sparsedict_core::dictionary::{Dictionary, EncoderConfig, Variant};
use sparsedict_core::linalg::{DenseMatrix, DenseVector};
use sparsedict_core::trainer::loss_and_gradients;

const INSTANCES: usize = 50;

fn check_variant(variant: Variant, with_aux: bool, seed: u64) {
    if let Err(e) = gradient_check(variant, with_aux, seed, INSTANCES) {
        panic!("{e}");
    }
}

#[test]
fn relu_gradients_match_finite_differences() {
    check_variant(Variant::Relu, false, 11);
}

#[test]
fn jumprelu_gradients_match_finite_differences() {
    check_variant(Variant::JumpRelu, false, 12);
}

#[test]
fn topk_gradients_match_finite_differences() {
    check_variant(Variant::TopK, false, 13);
}

#[test]
fn batchtopk_gradients_match_finite_differences() {
    check_variant(Variant::BatchTopK, false, 14);
}

#[test]
fn mp_gradients_match_finite_differences() {
    check_variant(Variant::Mp, false, 15);
}

#[test]
fn auxiliary_loss_gradients_match_finite_differences() {
    // ReLU has no candidates: every positive score is already active.
    for (i, v) in [Variant::JumpRelu, Variant::TopK, Variant::BatchTopK, Variant::Mp].into_iter().enumerate() {
        check_variant(v, true, 20 + i as u64);
    }
}

#[test]
fn jumprelu_threshold_uses_rectangular_kernel() {
    // One atom whose pre-activation sits inside the kernel window.
    let eps = 0.01;
    let theta = 0.5;
    let dict = Dictionary {
        d: DenseMatrix::identity(1),
        b_pre: DenseVector::zeros(1),
        encoder_weights: Some(DenseMatrix::identity(1)),
        encoder_bias: Some(DenseVector::zeros(1)),
        thresholds: Some(DenseVector::from(vec![theta])),
    };
    let mut cfg = EncoderConfig::new(Variant::JumpRelu, 1, 1);
    cfg.ste_bandwidth = eps;
    cfg.target_l0 = 0.2;
    cfg.aux_alpha = 0.0;
    let x = 0.502;
    let (_, g) = loss_and_gradients(&dict, &cfg, &[[x]], None).unwrap();
    // z = u active, dL/dz = −2(x − z) = 0 since x̂ = x; only the ℓ₀ term remains.
    let expected = -cfg.target_l0 / eps;
    assert!((g.theta.unwrap()[0] - expected).abs() < 1e-12);

    let (_, g) = loss_and_gradients(&dict, &cfg, &[[0.9]], None).unwrap();
    assert_eq!(g.theta.unwrap()[0], 0.0);
}
