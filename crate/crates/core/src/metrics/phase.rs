//! Degree requirement as the entry bound grows like `c sqrt(ln n)`.

use serde::{Deserialize, Serialize};

use crate::attention::exact::attn_exact;
use crate::attention::fast::{attn_fast_detailed, select_degree, ApproxConfig};
use crate::attention::AttentionParams;
use crate::counter::OpCount;
use crate::error::{Error, Result};
use crate::rng::Rng;
use crate::tensor::{inf_norm_diff, FlatMatrix};

/// Token count used for the fast-vs-exact comparison on feasible rows.
pub const COMPARE_TOKENS: usize = 256;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PhaseRow {
    pub c: f64,
    /// Entry bound `c sqrt(ln n)` on queries and keys.
    pub r: f64,
    /// Score bound `d R^2`.
    pub b: f64,
    /// `None` when no degree up to `g_max` works.
    pub degree: Option<usize>,
    pub err: Option<f64>,
    pub delta_prime: Option<f64>,
}

impl PhaseRow {
    pub fn feasible(&self) -> bool {
        self.degree.is_some()
    }

    pub fn status(&self) -> &'static str {
        if self.feasible() {
            "ok"
        } else {
            "FAIL"
        }
    }
}

/// For each `c`, picks the degree for `b = d R^2` and, when one exists,
/// measures the fast-vs-exact gap on `min(n, 256)` tokens whose queries and
/// keys are uniform on `[-R, R]` (identity query/key projections).
pub fn phase_sweep(n: usize, c_values: &[f64], delta: f64, g_max: usize, d: usize, seed: u64) -> Result<Vec<PhaseRow>> {
    if n < 2 {
        return Err(Error::InvalidConfig(format!("phase sweep needs n >= 2, got {n}")));
    }
    if c_values.is_empty() {
        return Err(Error::InvalidConfig("phase sweep needs at least one c".into()));
    }
    if c_values.iter().any(|c| !(c.is_finite() && *c > 0.0)) || c_values.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::InvalidConfig("c values must be positive and strictly ascending".into()));
    }
    ApproxConfig::new(delta, g_max, 1.0)?;
    let scale = (n as f64).ln().sqrt();
    let tokens = n.min(COMPARE_TOKENS);
    let root = Rng::new(seed);
    c_values
        .iter()
        .enumerate()
        .map(|(i, &c)| {
            let r = c * scale;
            let b = d as f64 * r * r;
            let degree = match select_degree(b, delta, g_max) {
                Ok(g) => Some(g),
                Err(Error::RangeTooLarge { .. }) => None,
                Err(e) => return Err(e),
            };
            let mut row = PhaseRow { c, r, b, degree, err: None, delta_prime: None };
            if degree.is_some() {
                let mut rng = root.substream(i as u64);
                let x = FlatMatrix::random(tokens, d, r, &mut rng);
                let id = FlatMatrix::identity(d);
                let w_v = FlatMatrix::random(d, d, 1.0, &mut rng);
                let p = AttentionParams::new(id.clone(), id, w_v, r.max(1.0))?;
                let cfg = ApproxConfig::new(delta, g_max, r)?;
                let fast = attn_fast_detailed(&x, &p, &cfg, &mut OpCount::default())?;
                let exact = attn_exact(&x, &p)?;
                row.err = Some(inf_norm_diff(&fast.output, &exact)?);
                row.delta_prime = Some(fast.delta_prime);
            }
            Ok(row)
        })
        .collect()
}

/// `c = step, 2 step, ..., count * step`.
pub fn c_grid(step: f64, count: usize) -> Vec<f64> {
    (1..=count).map(|i| i as f64 * step).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn tiny_c_needs_tiny_degree() {
        let rows = phase_sweep(4096, &[1e-4, 0.05], 1e-3, 24, 4, 1).unwrap();
        assert!(rows[0].degree.unwrap() <= 1);
        assert!(rows[1].feasible());
        assert!(rows[1].err.unwrap() <= rows[1].delta_prime.unwrap());
    }

    #[test]
    fn large_c_fails() {
        let rows = phase_sweep(4096, &[10.0], 1e-3, 24, 4, 1).unwrap();
        assert_eq!(rows[0].status(), "FAIL");
        assert!(rows[0].err.is_none());
    }

    #[test]
    fn doubling_c_never_lowers_degree() {
        let cs = [0.05, 0.1, 0.2, 0.4, 0.8];
        let rows = phase_sweep(64, &cs, 1e-3, 24, 4, 2).unwrap();
        let gs: Vec<usize> = rows.iter().map(|r| r.degree.unwrap_or(usize::MAX)).collect();
        assert!(gs.windows(2).all(|w| w[0] <= w[1]), "{gs:?}");
    }

    #[test]
    fn rejects_bad_lists() {
        assert!(phase_sweep(64, &[], 1e-3, 24, 4, 0).is_err());
        assert!(phase_sweep(64, &[0.2, 0.1], 1e-3, 24, 4, 0).is_err());
        assert!(phase_sweep(64, &[-0.1, 0.1], 1e-3, 24, 4, 0).is_err());
    }
}
