//! Serializable record of one end-to-end run.

use serde::{Deserialize, Serialize};

use crate::counter::OpCounter;

use super::{ExecutionMode, ModelConfig};

/// One attention step of the transformer stage.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepTrace {
    pub step: usize,
    /// Token count `L_k` fed to the attention layer.
    pub tokens: usize,
    pub degree: Option<usize>,
    pub k_feat: Option<usize>,
    pub score_bound: Option<f64>,
    pub delta_prime: Option<f64>,
    /// Bound on the FAST-vs-EXACT difference of this step's output.
    pub error_bound: f64,
}

/// One decoder layer.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LayerTrace {
    pub layer: String,
    pub output_shape: [usize; 3],
    pub degree: Option<usize>,
    pub k_feat: Option<usize>,
    pub delta_prime: Option<f64>,
    pub error_bound: f64,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct WallTimes {
    pub stage1: f64,
    pub stage2: f64,
    pub stage3: f64,
    pub total: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunTrace {
    pub seed: u64,
    pub mode: ExecutionMode,
    pub config: ModelConfig,
    pub image_shape: [usize; 3],
    pub stage1: Vec<StepTrace>,
    pub stage2_bound: f64,
    pub stage3: Vec<LayerTrace>,
    /// Guaranteed bound on the image difference to the EXACT run with the
    /// same seed and config. Zero for EXACT runs.
    pub composed_bound: f64,
    pub counters: OpCounter,
    /// Informational only; excluded from determinism comparisons.
    pub wall_ms: WallTimes,
}
