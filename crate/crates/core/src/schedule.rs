use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Square pyramid: scale `r` (zero based) has side `alpha^r`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct PyramidSchedule {
    alpha: usize,
    num_scales: usize,
}

impl PyramidSchedule {
    pub fn new(alpha: usize, num_scales: usize) -> Result<Self> {
        if alpha < 2 {
            return Err(Error::InvalidConfig(format!("growth rate must be >= 2, got {alpha}")));
        }
        if num_scales == 0 {
            return Err(Error::InvalidConfig("need at least one scale".into()));
        }
        // alpha^(2K) must fit for the closed-form token count.
        let fits = u32::try_from(2 * num_scales)
            .ok()
            .and_then(|e| (alpha as u64).checked_pow(e))
            .is_some_and(|v| v <= usize::MAX as u64);
        if !fits {
            return Err(Error::InvalidConfig(format!(
                "alpha = {alpha}, K = {num_scales} overflows the token count"
            )));
        }
        Ok(Self { alpha, num_scales })
    }

    pub fn alpha(&self) -> usize {
        self.alpha
    }

    pub fn num_scales(&self) -> usize {
        self.num_scales
    }

    /// Side length of scale `r`, zero based.
    pub fn side(&self, r: usize) -> usize {
        self.alpha.pow(r as u32)
    }

    pub fn sides(&self) -> Vec<usize> {
        (0..self.num_scales).map(|r| self.side(r)).collect()
    }

    /// Side `n` of the finest scale.
    pub fn final_side(&self) -> usize {
        self.side(self.num_scales - 1)
    }

    /// Tokens in the first `k` scales, `(alpha^(2k) - 1) / (alpha^2 - 1)`.
    pub fn token_count(&self, k: usize) -> usize {
        let a2 = self.alpha * self.alpha;
        (a2.pow(k as u32) - 1) / (a2 - 1)
    }
}
