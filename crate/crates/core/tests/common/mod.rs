//! Straight-loop reference implementations shared by the integration tests.
//! They index everything explicitly and share no code with the library
//! kernels beyond the tensor containers.

#![allow(dead_code)]

use varfast::{AttentionParams, ConvKernelSet, FlatMatrix, TokenMap};

/// Cubic B-spline closed form.
pub fn bspline(x: f64) -> f64 {
    let a = x.abs();
    if a >= 2.0 {
        0.0
    } else if a >= 1.0 {
        (2.0 - a).powi(3) / 6.0
    } else {
        ((2.0 - a).powi(3) - 4.0 * (1.0 - a).powi(3)) / 6.0
    }
}

/// Normalized 4x4 neighbourhood sum with align-centers coordinates and
/// clamped indices. Axes whose size is unchanged copy through.
pub fn interp(x: &TokenMap, th: usize, tw: usize) -> TokenMap {
    let (h, w, d) = x.shape();
    let taps = |i: usize, src: usize, dst: usize| -> Vec<(usize, f64)> {
        if src == dst {
            return vec![(i, 1.0)];
        }
        let s = (i as f64 + 0.5) * src as f64 / dst as f64 - 0.5;
        let base = s.floor();
        (-1i64..=2)
            .map(|o| {
                let pos = base as i64 + o;
                let idx = pos.clamp(0, src as i64 - 1) as usize;
                (idx, bspline(s - pos as f64))
            })
            .collect()
    };
    TokenMap::from_fn(th, tw, d, |i, j, c| {
        let (mut num, mut den) = (0.0, 0.0);
        for (si, wi) in taps(i, h, th) {
            for (sj, wj) in taps(j, w, tw) {
                num += wi * wj * x.get(si, sj, c);
                den += wi * wj;
            }
        }
        num / den
    })
}

pub fn conv(x: &TokenMap, k: &ConvKernelSet) -> TokenMap {
    let (h, w, c_in) = x.shape();
    TokenMap::from_fn(h, w, k.c_out(), |i, j, l| {
        let mut acc = k.bias();
        for m in 0..3 {
            for n in 0..3 {
                for c in 0..c_in {
                    let (si, sj) = (i as i64 + m as i64 - 1, j as i64 + n as i64 - 1);
                    if si >= 0 && sj >= 0 && si < h as i64 && sj < w as i64 {
                        acc += x.get(si as usize, sj as usize, c) * k.weight(l, m, n, c);
                    }
                }
            }
        }
        acc
    })
}

pub fn add(a: &TokenMap, b: &TokenMap) -> TokenMap {
    let (h, w, c) = a.shape();
    TokenMap::from_fn(h, w, c, |i, j, k| a.get(i, j, k) + b.get(i, j, k))
}

fn mat(a: &FlatMatrix, b: &FlatMatrix) -> FlatMatrix {
    let mut out = FlatMatrix::zeros(a.rows(), b.cols());
    for i in 0..a.rows() {
        for j in 0..b.cols() {
            out.set(i, j, (0..a.cols()).map(|t| a.get(i, t) * b.get(t, j)).sum());
        }
    }
    out
}

/// Materializes `A` entry by entry with unshifted `exp` and normalizes rows.
pub fn attention(x: &FlatMatrix, p: &AttentionParams) -> FlatMatrix {
    let (q, k, v) = (mat(x, &p.w_q), mat(x, &p.w_k), mat(x, &p.w_v));
    let l = x.rows();
    let mut out = FlatMatrix::zeros(l, v.cols());
    for i in 0..l {
        let a: Vec<f64> = (0..l).map(|j| (0..q.cols()).map(|t| q.get(i, t) * k.get(j, t)).sum::<f64>().exp()).collect();
        let total: f64 = a.iter().sum();
        for c in 0..v.cols() {
            out.set(i, c, (0..l).map(|j| a[j] * v.get(j, c)).sum::<f64>() / total);
        }
    }
    out
}

pub fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}
