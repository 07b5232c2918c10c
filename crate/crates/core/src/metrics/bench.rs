//! Operation counts of full runs over a range of pyramid depths.

use serde::{Deserialize, Serialize};

use crate::counter::OpCount;
use crate::error::{Error, Result};
use crate::pipeline::{run_end_to_end, ExecutionMode, ModelConfig};

use super::fit::{fit_exponent, ScalingReport};

pub const STAGES: [&str; 3] = ["stage1", "stage2", "stage3"];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchRow {
    pub num_scales: usize,
    /// Final side `alpha^(K-1)`.
    pub n: usize,
    /// Stage-1 output token count.
    pub tokens: usize,
    pub mode: ExecutionMode,
    pub stage: String,
    pub counts: OpCount,
    pub wall_ms: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SlopeRow {
    pub stage: String,
    pub mode: ExecutionMode,
    pub report: ScalingReport,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchTable {
    pub rows: Vec<BenchRow>,
    pub slopes: Vec<SlopeRow>,
}

/// Runs `seed` for every `K` in `k_min..=k_max` and mode, and fits the
/// multiplication count of each stage against `n`.
pub fn bench(cfg: &ModelConfig, seed: u64, k_min: usize, k_max: usize, modes: &[ExecutionMode]) -> Result<BenchTable> {
    if k_min < 2 || k_max < k_min + 2 {
        return Err(Error::InvalidConfig(format!(
            "bench needs 2 <= k_min and at least three depths, got {k_min}..={k_max}"
        )));
    }
    let mut rows = Vec::new();
    for k in k_min..=k_max {
        let run_cfg = ModelConfig { num_scales: k, ..cfg.clone() };
        let schedule = run_cfg.schedule()?;
        for &mode in modes {
            let run = run_end_to_end(seed, &run_cfg, mode)?;
            let t = &run.trace;
            let stage_counts = [t.counters.stage1(), t.counters.stage2, t.counters.stage3];
            let walls = [t.wall_ms.stage1, t.wall_ms.stage2, t.wall_ms.stage3];
            for ((stage, counts), wall_ms) in STAGES.iter().zip(stage_counts).zip(walls) {
                rows.push(BenchRow {
                    num_scales: k,
                    n: schedule.final_side(),
                    tokens: schedule.token_count(k),
                    mode,
                    stage: stage.to_string(),
                    counts,
                    wall_ms,
                });
            }
        }
    }
    let mut slopes = Vec::new();
    for stage in STAGES {
        for &mode in modes {
            let points: Vec<(f64, f64)> = rows
                .iter()
                .filter(|r| r.stage == stage && r.mode == mode)
                .map(|r| (r.n as f64, r.counts.mults as f64))
                .collect();
            slopes.push(SlopeRow { stage: stage.to_string(), mode, report: fit_exponent(&points)? });
        }
    }
    Ok(BenchTable { rows, slopes })
}

impl BenchTable {
    pub fn slope(&self, stage: &str, mode: ExecutionMode) -> Option<f64> {
        self.slopes.iter().find(|s| s.stage == stage && s.mode == mode).map(|s| s.report.fitted_slope)
    }
}
