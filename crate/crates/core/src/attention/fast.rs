//! Low-rank approximate attention.
//!
//! `exp(q.k)` is replaced by its degree-`g` Taylor polynomial, realised as
//! `<phi(q), phi(k)>` with the feature map from [`super::features`]. With
//! `U = phi(Q)` and `V = phi(K)` the output is
//! `diag(U V^T 1)^-1 U (V^T (X W_V))`, evaluated right to left so no `L x L`
//! intermediate exists.
//!
//! Degree selection: if `|q.k| <= b` for every pair, the Lagrange remainder
//! gives `|T_g(s) - e^s| <= e^b b^(g+1) / (g+1)!`. Requiring
//! `b^(g+1) / (g+1)! <= delta e^(-2b)` caps that by `delta e^(-b)`, which is
//! at most `delta e^s`. Every approximate entry is then within relative
//! error `delta` of the true one, in particular strictly positive, and the
//! normalized output moves by at most `2 delta / (1 - delta) * ||X W_V||_inf`.

use serde::{Deserialize, Serialize};

use crate::counter::OpCount;
use crate::error::{Error, Result};
use crate::tensor::FlatMatrix;

use super::features::PolyFeatureMap;
use super::AttentionParams;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ApproxConfig {
    /// Target entrywise relative error of the attention matrix.
    pub delta: f64,
    pub g_max: usize,
    /// Bound assumed for query and key entries; widened at run time if the
    /// actual projections exceed it.
    pub r_bound: f64,
}

impl ApproxConfig {
    pub fn new(delta: f64, g_max: usize, r_bound: f64) -> Result<Self> {
        let cfg = Self { delta, g_max, r_bound };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.delta > 0.0 && self.delta <= 0.1) {
            return Err(Error::InvalidConfig(format!("delta must be in (0, 0.1], got {}", self.delta)));
        }
        if self.g_max < 1 {
            return Err(Error::InvalidConfig("g_max must be >= 1".into()));
        }
        if !(self.r_bound > 0.0 && self.r_bound.is_finite()) {
            return Err(Error::InvalidConfig(format!("r_bound must be positive, got {}", self.r_bound)));
        }
        Ok(())
    }
}

impl Default for ApproxConfig {
    fn default() -> Self {
        Self { delta: 1e-6, g_max: 24, r_bound: 0.5 }
    }
}

/// Smallest `g <= g_max` with `b^(g+1) / (g+1)! <= delta * e^(-2b)`.
pub fn select_degree(b: f64, delta: f64, g_max: usize) -> Result<usize> {
    if !(b >= 0.0 && b.is_finite()) {
        return Err(Error::InvalidConfig(format!("score bound must be finite and >= 0, got {b}")));
    }
    if !(delta > 0.0 && delta < 1.0) {
        return Err(Error::InvalidConfig(format!("delta must be in (0, 1), got {delta}")));
    }
    if b == 0.0 {
        return Ok(0);
    }
    let target = delta.ln() - 2.0 * b;
    let ln_b = b.ln();
    // ln(b^(g+1) / (g+1)!) built up term by term
    let mut ln_term = 0.0;
    for g in 0..=g_max {
        let n = (g + 1) as f64;
        ln_term += ln_b - n.ln();
        if ln_term <= target {
            return Ok(g);
        }
    }
    Err(Error::RangeTooLarge { bound: b, delta, g_max })
}

/// `U` and `V` with `(U V^T)_ij = T_g(q_i . k_j)`.
#[derive(Debug, Clone, PartialEq)]
pub struct LowRankFactors {
    pub u: FlatMatrix,
    pub v: FlatMatrix,
    pub k_feat: usize,
    pub degree: usize,
    /// Bound `b` used for degree selection.
    pub score_bound: f64,
}

/// `b = d * max(R, ||Q||_inf) * max(R, ||K||_inf)`.
pub fn score_bound(q: &FlatMatrix, k: &FlatMatrix, r_bound: f64) -> f64 {
    let d = q.cols() as f64;
    d * q.inf_norm().max(r_bound) * k.inf_norm().max(r_bound)
}

pub fn build_factors(x: &FlatMatrix, p: &AttentionParams, cfg: &ApproxConfig) -> Result<LowRankFactors> {
    cfg.validate()?;
    let (q, k, _) = p.project(x, &mut OpCount::default())?;
    let b = score_bound(&q, &k, cfg.r_bound);
    let degree = select_degree(b, cfg.delta, cfg.g_max)?;
    let fm = PolyFeatureMap::new(x.cols(), degree)?;
    let kf = fm.len();
    let l = x.rows();
    let mut u = FlatMatrix::zeros(l, kf);
    let mut v = FlatMatrix::zeros(l, kf);
    let mut raw = vec![0.0; kf];
    for i in 0..l {
        fm.fill(q.row(i), &mut raw, &mut u.data_mut()[i * kf..(i + 1) * kf]);
        fm.fill(k.row(i), &mut raw, &mut v.data_mut()[i * kf..(i + 1) * kf]);
    }
    // Approximate row sums U (V^T 1).
    let mut col_sums = vec![0.0; kf];
    for j in 0..l {
        for (s, x) in col_sums.iter_mut().zip(v.row(j)) {
            *s += x;
        }
    }
    for i in 0..l {
        let sum: f64 = u.row(i).iter().zip(&col_sums).map(|(a, b)| a * b).sum();
        if !(sum > 0.0) {
            return Err(Error::NonPositiveRowSum { row: i });
        }
    }
    Ok(LowRankFactors { u, v, k_feat: kf, degree, score_bound: b })
}

/// Output of [`attn_fast_detailed`] with the quantities the bound needs.
#[derive(Debug, Clone, PartialEq)]
pub struct FastAttention {
    pub output: FlatMatrix,
    pub degree: usize,
    pub k_feat: usize,
    pub score_bound: f64,
    /// `||X W_V||_inf`.
    pub value_norm: f64,
    /// Guaranteed `||fast - exact||_inf`, `2 delta ||X W_V||_inf / (1 - delta)`.
    pub delta_prime: f64,
}

pub fn delta_prime(delta: f64, value_norm: f64) -> f64 {
    2.0 * delta * value_norm / (1.0 - delta)
}

pub fn attn_fast(x: &FlatMatrix, p: &AttentionParams, cfg: &ApproxConfig) -> Result<FlatMatrix> {
    Ok(attn_fast_detailed(x, p, cfg, &mut OpCount::default())?.output)
}

pub fn attn_fast_detailed(
    x: &FlatMatrix,
    p: &AttentionParams,
    cfg: &ApproxConfig,
    ops: &mut OpCount,
) -> Result<FastAttention> {
    cfg.validate()?;
    let (q, k, vals) = p.project(x, ops)?;
    let b = score_bound(&q, &k, cfg.r_bound);
    let degree = select_degree(b, cfg.delta, cfg.g_max)?;
    let fm = PolyFeatureMap::new(x.cols(), degree)?;
    let (l, d) = x.shape();
    let kf = fm.len();
    let w = d + 1;

    // S = V^T [X W_V | 1], k_feat x (d + 1), accumulated over tokens in order.
    let mut s = vec![0.0; kf * w];
    let mut raw = vec![0.0; kf];
    let mut phi = vec![0.0; kf];
    for j in 0..l {
        fm.fill(k.row(j), &mut raw, &mut phi);
        let vj = vals.row(j);
        for (f, &pf) in phi.iter().enumerate() {
            let acc = &mut s[f * w..(f + 1) * w];
            for c in 0..d {
                acc[c] += pf * vj[c];
            }
            acc[d] += pf;
        }
    }

    // Row i: (phi(q_i)^T S) then divide values by the normalizer column.
    let mut out = FlatMatrix::zeros(l, d);
    let mut row = vec![0.0; w];
    for i in 0..l {
        fm.fill(q.row(i), &mut raw, &mut phi);
        row.iter_mut().for_each(|r| *r = 0.0);
        for (f, &pf) in phi.iter().enumerate() {
            for (r, sv) in row.iter_mut().zip(&s[f * w..(f + 1) * w]) {
                *r += pf * sv;
            }
        }
        let denom = row[d];
        if !(denom > 0.0) || !denom.is_finite() {
            return Err(Error::NonPositiveRowSum { row: i });
        }
        for c in 0..d {
            out.set(i, c, row[c] / denom);
        }
    }

    *ops += fast_core_cost(l, d, &fm);
    let value_norm = vals.inf_norm();
    Ok(FastAttention {
        output: out,
        degree,
        k_feat: kf,
        score_bound: b,
        value_norm,
        delta_prime: delta_prime(cfg.delta, value_norm),
    })
}

fn fast_core_cost(l: usize, d: usize, fm: &PolyFeatureMap) -> OpCount {
    let (l, d, kf) = (l as u64, d as u64, fm.len() as u64);
    let features = 2 * l * fm.cost_per_vector() as u64;
    OpCount {
        mults: features + l * kf * d + l * kf * (d + 1) + l * d,
        adds: l * kf * (d + 1) + l * kf * (d + 1),
        exps: 0,
    }
}

/// Closed-form count for [`attn_fast_detailed`] at a given degree.
pub fn fast_attention_cost(l: usize, d: usize, degree: usize) -> OpCount {
    let fm = PolyFeatureMap::new(d, degree).expect("d >= 1");
    let (lu, du) = (l as u64, d as u64);
    OpCount::new(3 * lu * du * du, 3 * lu * du * (du - 1), 0) + fast_core_cost(l, d, &fm)
}
