//! Reference softmax attention `D^-1 A X W_V` with `A_ij = exp(q_i . k_j)`.
//!
//! No `1/sqrt(d)` temperature is applied. Rows are evaluated as
//! `exp(s_ij - max_j s_ij)`; the shift cancels in the row normalization, so
//! the output is the same function while `exp` cannot overflow.

use rayon::prelude::*;

use crate::counter::OpCount;
use crate::error::{Error, Result};
use crate::tensor::FlatMatrix;

use super::AttentionParams;

/// Largest token count [`attn_matrix`] will materialize.
pub const MATERIALIZE_LIMIT: usize = 4096;

pub fn attn_exact(x: &FlatMatrix, p: &AttentionParams) -> Result<FlatMatrix> {
    attn_exact_counted(x, p, &mut OpCount::default())
}

pub fn attn_exact_counted(x: &FlatMatrix, p: &AttentionParams, ops: &mut OpCount) -> Result<FlatMatrix> {
    let (q, k, v) = p.project(x, ops)?;
    let (l, d) = x.shape();
    let mut out = FlatMatrix::zeros(l, d);
    // Rows are independent; each keeps the ascending-j reduction order, so
    // the result does not depend on the thread count.
    let failures: Vec<Option<Error>> = out
        .data_mut()
        .par_chunks_mut(d)
        .enumerate()
        .map_init(
            || vec![0.0; l],
            |scores, (i, row)| {
                let qi = q.row(i);
                let mut max = f64::NEG_INFINITY;
                for (j, s) in scores.iter_mut().enumerate() {
                    *s = dot(qi, k.row(j));
                    if !s.is_finite() {
                        return Some(Error::NumericOverflow { row: i, col: j });
                    }
                    max = max.max(*s);
                }
                let mut denom = 0.0;
                for (j, s) in scores.iter().enumerate() {
                    let a = (s - max).exp();
                    denom += a;
                    for (o, vj) in row.iter_mut().zip(v.row(j)) {
                        *o += a * vj;
                    }
                }
                for o in row.iter_mut() {
                    *o /= denom;
                }
                None
            },
        )
        .collect();
    if let Some(e) = failures.into_iter().flatten().next() {
        return Err(e);
    }
    *ops += score_and_mix_cost(l, d);
    Ok(out)
}

/// The `L x L` matrix `A` itself, for testing. Unshifted, so it can overflow.
pub fn attn_matrix(x: &FlatMatrix, p: &AttentionParams) -> Result<FlatMatrix> {
    let (q, k, _) = p.project(x, &mut OpCount::default())?;
    let l = x.rows();
    if l > MATERIALIZE_LIMIT {
        return Err(Error::TooLargeToMaterialize { len: l, limit: MATERIALIZE_LIMIT });
    }
    let mut a = FlatMatrix::zeros(l, l);
    for i in 0..l {
        for j in 0..l {
            let e = dot(q.row(i), k.row(j)).exp();
            if !e.is_finite() {
                return Err(Error::NumericOverflow { row: i, col: j });
            }
            a.set(i, j, e);
        }
    }
    Ok(a)
}

#[inline]
pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    let mut acc = a[0] * b[0];
    for t in 1..a.len() {
        acc += a[t] * b[t];
    }
    acc
}

fn score_and_mix_cost(l: usize, d: usize) -> OpCount {
    let (l, d) = (l as u64, d as u64);
    OpCount {
        // scores, weighted values, final division
        mults: l * l * d + l * l * d + l * d,
        // scores, max shift, row sums and weighted-value accumulation
        adds: l * l * (d - 1) + l * l + l * l + l * l * d,
        exps: l * l,
    }
}

/// Closed-form count for [`attn_exact_counted`] on `l` tokens of width `d`.
pub fn exact_attention_cost(l: usize, d: usize) -> OpCount {
    let (lu, du) = (l as u64, d as u64);
    let projections = OpCount::new(3 * lu * du * du, 3 * lu * du * (du - 1), 0);
    projections + score_and_mix_cost(l, d)
}
