//! Scalar operation counters.
//!
//! Kernels increment these in bulk at loop level. Counts depend only on
//! shapes, mode and polynomial degree, never on tensor values.

use serde::{Deserialize, Serialize};
use std::ops::{Add, AddAssign};

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct OpCount {
    /// Multiplications and divisions.
    pub mults: u64,
    /// Additions, subtractions and comparisons-free accumulations.
    pub adds: u64,
    pub exps: u64,
}

impl OpCount {
    pub const ZERO: OpCount = OpCount { mults: 0, adds: 0, exps: 0 };

    pub fn new(mults: u64, adds: u64, exps: u64) -> Self {
        Self { mults, adds, exps }
    }

    #[inline]
    pub fn mul(&mut self, n: usize) {
        self.mults += n as u64;
    }

    #[inline]
    pub fn add(&mut self, n: usize) {
        self.adds += n as u64;
    }

    #[inline]
    pub fn exp(&mut self, n: usize) {
        self.exps += n as u64;
    }

    pub fn total(&self) -> u64 {
        self.mults + self.adds + self.exps
    }
}

impl Add for OpCount {
    type Output = OpCount;
    fn add(self, rhs: OpCount) -> OpCount {
        OpCount {
            mults: self.mults + rhs.mults,
            adds: self.adds + rhs.adds,
            exps: self.exps + rhs.exps,
        }
    }
}

impl AddAssign for OpCount {
    fn add_assign(&mut self, rhs: OpCount) {
        *self = *self + rhs;
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Stage {
    Stage1Attn,
    Stage1Up,
    Stage2,
    Stage3,
}

impl Stage {
    pub const ALL: [Stage; 4] = [Stage::Stage1Attn, Stage::Stage1Up, Stage::Stage2, Stage::Stage3];
}

/// Per-stage tally for one end-to-end run.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct OpCounter {
    pub stage1_attn: OpCount,
    pub stage1_up: OpCount,
    pub stage2: OpCount,
    pub stage3: OpCount,
}

impl OpCounter {
    pub fn stage_mut(&mut self, stage: Stage) -> &mut OpCount {
        match stage {
            Stage::Stage1Attn => &mut self.stage1_attn,
            Stage::Stage1Up => &mut self.stage1_up,
            Stage::Stage2 => &mut self.stage2,
            Stage::Stage3 => &mut self.stage3,
        }
    }

    pub fn stage(&self, stage: Stage) -> OpCount {
        match stage {
            Stage::Stage1Attn => self.stage1_attn,
            Stage::Stage1Up => self.stage1_up,
            Stage::Stage2 => self.stage2,
            Stage::Stage3 => self.stage3,
        }
    }

    /// Attention plus pyramid up-sampling of the transformer stage.
    pub fn stage1(&self) -> OpCount {
        self.stage1_attn + self.stage1_up
    }

    pub fn total(&self) -> OpCount {
        self.stage1() + self.stage2 + self.stage3
    }
}
