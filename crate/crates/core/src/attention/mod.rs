//! Softmax attention, exact and low-rank.

pub mod exact;
pub mod fast;
pub mod features;

use serde::{Deserialize, Serialize};

use crate::counter::OpCount;
use crate::error::{Error, Result};
use crate::rng::Rng;
use crate::tensor::FlatMatrix;

/// Query/key/value projections of one attention layer, entries bounded by
/// `entry_bound`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttentionParams {
    pub w_q: FlatMatrix,
    pub w_k: FlatMatrix,
    pub w_v: FlatMatrix,
    pub entry_bound: f64,
}

impl AttentionParams {
    pub fn new(w_q: FlatMatrix, w_k: FlatMatrix, w_v: FlatMatrix, entry_bound: f64) -> Result<Self> {
        let d = w_q.rows();
        for (name, w) in [("w_q", &w_q), ("w_k", &w_k), ("w_v", &w_v)] {
            if w.shape() != (d, d) {
                return Err(Error::dims(format!("{name} is {:?}, expected {d}x{d}", w.shape())));
            }
        }
        if !(entry_bound > 0.0 && entry_bound.is_finite()) {
            return Err(Error::InvalidConfig(format!("entry bound must be positive, got {entry_bound}")));
        }
        for (name, w) in [("w_q", &w_q), ("w_k", &w_k), ("w_v", &w_v)] {
            if w.inf_norm() > entry_bound {
                return Err(Error::InvalidConfig(format!(
                    "{name} has entry {} above bound {entry_bound}",
                    w.inf_norm()
                )));
            }
        }
        Ok(Self { w_q, w_k, w_v, entry_bound })
    }

    /// I.i.d. uniform entries on `[-bound, bound]`, drawn q, k, v in order.
    pub fn random(d: usize, bound: f64, rng: &mut Rng) -> Self {
        let w_q = FlatMatrix::random(d, d, bound, rng);
        let w_k = FlatMatrix::random(d, d, bound, rng);
        let w_v = FlatMatrix::random(d, d, bound, rng);
        Self::new(w_q, w_k, w_v, bound).expect("random weights respect their bound")
    }

    pub fn dim(&self) -> usize {
        self.w_q.rows()
    }

    pub(crate) fn check_input(&self, x: &FlatMatrix) -> Result<()> {
        if x.cols() != self.dim() {
            return Err(Error::dims(format!(
                "input has {} columns, weights are {}x{}",
                x.cols(),
                self.dim(),
                self.dim()
            )));
        }
        Ok(())
    }

    /// `(X W_Q, X W_K, X W_V)`.
    pub fn project(&self, x: &FlatMatrix, ops: &mut OpCount) -> Result<(FlatMatrix, FlatMatrix, FlatMatrix)> {
        self.check_input(x)?;
        Ok((x.matmul(&self.w_q, ops)?, x.matmul(&self.w_k, ops)?, x.matmul(&self.w_v, ops)?))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_non_square_and_out_of_bound() {
        let sq = FlatMatrix::identity(2);
        let rect = FlatMatrix::zeros(2, 3);
        assert!(AttentionParams::new(sq.clone(), rect, sq.clone(), 1.0).is_err());
        assert!(AttentionParams::new(sq.clone(), sq.clone(), sq.clone(), 0.5).is_err());
        assert!(AttentionParams::new(sq.clone(), sq.clone(), sq, 1.0).is_ok());
    }

    #[test]
    fn random_weights_are_bounded() {
        let p = AttentionParams::random(4, 0.5, &mut Rng::new(1));
        assert!(p.w_q.inf_norm() <= 0.5 && p.w_k.inf_norm() <= 0.5 && p.w_v.inf_norm() <= 0.5);
    }
}
