//! Per-layer bounds on the difference between the FAST and EXACT paths.
//!
//! Each function takes `eps_in`, a bound on `||X' - X||_inf` between the
//! fast-path input `X'` and the exact-path input `X`, plus quantities
//! observed on the fast path only, and returns a bound on the output
//! difference. Every bound carries a small floating-point allowance so it
//! holds for the computed values and not only in exact arithmetic.
//!
//! For attention, write `w_j` and `w'_j` for the softmax weights of one row
//! on the two paths and `v_j`, `v'_j` for the value rows. Then
//! `sum w'_j v'_j - sum w_j v_j = sum w'_j (v'_j - v_j) + sum (w'_j - w_j) v_j`.
//! If every score moves by at most `eta`, each ratio `w'_j / w_j` lies in
//! `[e^(-2 eta), e^(2 eta)]`, so the second sum is at most
//! `(e^(2 eta) - 1) ||V||_inf`. The low-rank approximation adds `delta'` on
//! top.

use crate::attention::AttentionParams;
use crate::conv::{ConvKernelSet, ResNetBlock};
use crate::counter::OpCount;
use crate::pyramid::{axis_taps, KernelChoice};
use crate::tensor::FlatMatrix;

const U: f64 = f64::EPSILON;

/// Bound for `AAttC(X')` against `Attn(X)`.
pub fn attention_layer(
    eps_in: f64,
    x_fast: &FlatMatrix,
    p: &AttentionParams,
    delta_prime: f64,
    score_bound: f64,
    k_feat: usize,
) -> f64 {
    let (l, d) = x_fast.shape();
    let df = d as f64;
    let (q, k, v) = p.project(x_fast, &mut OpCount::default()).expect("shape checked by the layer");
    let (nq, nk, nv) = (q.inf_norm(), k.inf_norm(), v.inf_norm());
    let eps_q = df * eps_in * p.w_q.inf_norm();
    let eps_k = df * eps_in * p.w_k.inf_norm();
    let eps_v = df * eps_in * p.w_v.inf_norm();
    let eta = df * (nq * eps_k + (nk + eps_k) * eps_q);
    let v_exact = nv + eps_v;
    let lipschitz = eps_v + (2.0 * eta).exp_m1() * v_exact;
    let rounding = 4.0 * U * v_exact * (l as f64 + df)
        + 4.0 * U * nv * (l + k_feat) as f64 * (2.0 * score_bound).exp();
    delta_prime + lipschitz + rounding
}

/// Max-norm gain of resizing `h x w` to `th x tw`: the largest absolute
/// weight sum along each axis, multiplied. Exactly 1 for the B-spline.
pub fn up_gain(choice: KernelChoice, h: usize, w: usize, th: usize, tw: usize) -> f64 {
    let axis = |src: usize, dst: usize| {
        if src == dst {
            return 1.0;
        }
        axis_taps(choice, src, dst, &mut OpCount::default())
            .iter()
            .map(|t| t.w.iter().map(|v| v.abs()).sum::<f64>())
            .fold(0.0, f64::max)
    };
    axis(h, th) * axis(w, tw)
}

/// Bound after up-interpolation of a map with max norm `x_norm`.
pub fn up_layer(eps_in: f64, x_norm: f64, gain: f64) -> f64 {
    gain * eps_in + 16.0 * U * gain * x_norm
}

/// Bound after one convolution whose fast-path input has max norm `x_norm`.
pub fn conv_layer(eps_in: f64, x_norm: f64, k: &ConvKernelSet) -> f64 {
    let lip = k.lipschitz();
    let taps = (9 * k.c_in() + 1) as f64;
    lip * eps_in + 8.0 * U * taps * (lip * (x_norm + eps_in) + k.bias().abs())
}

/// Bound after `x + conv2(conv1(x))`, given the fast-path input norm and the
/// fast-path norm of `conv1(x)`.
pub fn resnet_layer(eps_in: f64, x_norm: f64, mid_norm: f64, block: &ResNetBlock) -> f64 {
    let e1 = conv_layer(eps_in, x_norm, &block.conv1);
    let e2 = conv_layer(e1, mid_norm, &block.conv2);
    eps_in + e2 + 4.0 * U * (x_norm + mid_norm * block.conv2.lipschitz() + block.conv2.bias().abs())
}
