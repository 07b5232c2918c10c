//! Bicubic spline up-interpolation and the pyramid up-sampling layer.
//!
//! Source coordinates use the align-centers convention: output index `i` on
//! an axis resized from `src` to `dst` samples source coordinate
//! `(i + 0.5) * src / dst - 0.5`. With `base = floor(s)` and `f = s - base`,
//! taps `base-1 ..= base+2` get weights `W(f+1), W(f), W(1-f), W(2-f)`.
//! Indices are clamped to the valid range (edge replication) and the four
//! weights are renormalized to sum to one, so every output entry is a convex
//! combination of source entries whenever `W >= 0`.
//!
//! The 2-D kernel is the outer product of the 1-D weights, so the layer is
//! evaluated as a width pass followed by a height pass. An axis whose size
//! does not change is passed through untouched.

use serde::{Deserialize, Serialize};

use crate::counter::OpCount;
use crate::error::{Error, Result};
use crate::schedule::PyramidSchedule;
use crate::tensor::TokenMap;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum KernelChoice {
    /// Uniform cubic B-spline, values in `[0, 2/3]`.
    #[default]
    #[serde(rename = "bspline")]
    CubicBSpline,
    /// Keys kernel with `a = -0.5`; has negative lobes.
    #[serde(rename = "catmullrom")]
    CatmullRom,
}

impl KernelChoice {
    pub const SUPPORT: f64 = 2.0;

    pub fn is_nonnegative(self) -> bool {
        matches!(self, KernelChoice::CubicBSpline)
    }
}

impl std::str::FromStr for KernelChoice {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "bspline" => Ok(KernelChoice::CubicBSpline),
            "catmullrom" => Ok(KernelChoice::CatmullRom),
            other => Err(Error::InvalidConfig(format!("unknown kernel `{other}`"))),
        }
    }
}

/// Piecewise cubic kernel weight, zero outside `(-2, 2)`.
pub fn kernel_eval(choice: KernelChoice, x: f64) -> f64 {
    let t = x.abs();
    if t >= KernelChoice::SUPPORT {
        return 0.0;
    }
    match choice {
        KernelChoice::CubicBSpline => {
            if t < 1.0 {
                (4.0 - 6.0 * t * t + 3.0 * t * t * t) / 6.0
            } else {
                let u = 2.0 - t;
                u * u * u / 6.0
            }
        }
        KernelChoice::CatmullRom => {
            if t < 1.0 {
                1.5 * t * t * t - 2.5 * t * t + 1.0
            } else {
                -0.5 * t * t * t + 2.5 * t * t - 4.0 * t + 2.0
            }
        }
    }
}

/// Source taps for one output index along one axis.
#[derive(Debug, Clone, Copy, PartialEq)]
pub(crate) struct Taps {
    pub idx: [usize; 4],
    pub w: [f64; 4],
}

/// Normalized taps for every output index of an axis resized `src -> dst`.
pub(crate) fn axis_taps(choice: KernelChoice, src: usize, dst: usize, ops: &mut OpCount) -> Vec<Taps> {
    let scale = src as f64 / dst as f64;
    let last = src as isize - 1;
    (0..dst)
        .map(|i| {
            let s = (i as f64 + 0.5) * scale - 0.5;
            let base = s.floor();
            let f = s - base;
            let base = base as isize;
            let raw = [
                kernel_eval(choice, f + 1.0),
                kernel_eval(choice, f),
                kernel_eval(choice, 1.0 - f),
                kernel_eval(choice, 2.0 - f),
            ];
            let sum = raw[0] + raw[1] + raw[2] + raw[3];
            let mut idx = [0usize; 4];
            let mut w = [0.0; 4];
            for t in 0..4 {
                idx[t] = (base - 1 + t as isize).clamp(0, last) as usize;
                w[t] = raw[t] / sum;
            }
            ops.add(3);
            ops.mul(4);
            Taps { idx, w }
        })
        .collect()
}

/// Resizes `x` to `target_h x target_w` with the separable spline kernel.
pub fn up_interpolate(
    x: &TokenMap,
    target_h: usize,
    target_w: usize,
    choice: KernelChoice,
) -> Result<TokenMap> {
    up_interpolate_counted(x, target_h, target_w, choice, &mut OpCount::default())
}

pub fn up_interpolate_counted(
    x: &TokenMap,
    target_h: usize,
    target_w: usize,
    choice: KernelChoice,
    ops: &mut OpCount,
) -> Result<TokenMap> {
    let (h, w, d) = x.shape();
    if target_h < h || target_w < w || target_h == 0 || target_w == 0 {
        return Err(Error::InvalidTarget { source_h: h, source_w: w, target_h, target_w });
    }

    // Width pass: h x target_w x d.
    let wide = if target_w == w {
        x.clone()
    } else {
        let taps = axis_taps(choice, w, target_w, ops);
        let mut out = TokenMap::zeros(h, target_w, d);
        for i in 0..h {
            for (j, tp) in taps.iter().enumerate() {
                for c in 0..d {
                    let mut acc = tp.w[0] * x.get(i, tp.idx[0], c);
                    for t in 1..4 {
                        acc += tp.w[t] * x.get(i, tp.idx[t], c);
                    }
                    out.set(i, j, c, acc);
                }
            }
        }
        ops.mul(4 * h * target_w * d);
        ops.add(3 * h * target_w * d);
        out
    };

    // Height pass: target_h x target_w x d.
    if target_h == h {
        return Ok(wide);
    }
    let taps = axis_taps(choice, h, target_h, ops);
    let mut out = TokenMap::zeros(target_h, target_w, d);
    for (i, tp) in taps.iter().enumerate() {
        for j in 0..target_w {
            for c in 0..d {
                let mut acc = tp.w[0] * wide.get(tp.idx[0], j, c);
                for t in 1..4 {
                    acc += tp.w[t] * wide.get(tp.idx[t], j, c);
                }
                out.set(i, j, c, acc);
            }
        }
    }
    ops.mul(4 * target_h * target_w * d);
    ops.add(3 * target_h * target_w * d);
    Ok(out)
}

/// One pyramid up-sampling block: returns `[x_init, up(X_1), ..., up(X_k)]`
/// where `X_r` is resized to the side of scale `r + 1`.
pub fn pyramid_up(
    x_init: &TokenMap,
    maps: &[TokenMap],
    schedule: &PyramidSchedule,
    choice: KernelChoice,
) -> Result<Vec<TokenMap>> {
    pyramid_up_counted(x_init, maps, schedule, choice, &mut OpCount::default())
}

pub fn pyramid_up_counted(
    x_init: &TokenMap,
    maps: &[TokenMap],
    schedule: &PyramidSchedule,
    choice: KernelChoice,
    ops: &mut OpCount,
) -> Result<Vec<TokenMap>> {
    if x_init.height() != 1 || x_init.width() != 1 {
        return Err(Error::dims(format!(
            "initial token map must be 1x1, got {}x{}",
            x_init.height(),
            x_init.width()
        )));
    }
    let k = maps.len();
    if k == 0 || k >= schedule.num_scales() {
        return Err(Error::dims(format!(
            "pyramid block takes 1..{} maps, got {k}",
            schedule.num_scales()
        )));
    }
    let d = x_init.channels();
    let mut out = Vec::with_capacity(k + 1);
    out.push(x_init.clone());
    for (r, m) in maps.iter().enumerate() {
        let side = schedule.side(r);
        if m.shape() != (side, side, d) {
            return Err(Error::dims(format!(
                "scale {r} expected {side}x{side}x{d}, got {:?}",
                m.shape()
            )));
        }
        let next = schedule.side(r + 1);
        out.push(up_interpolate_counted(m, next, next, choice, ops)?);
    }
    Ok(out)
}
