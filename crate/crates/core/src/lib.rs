//! Deterministic visual autoregressive pipeline with exact and low-rank
//! polynomial attention.
//!
//! Stage 1 alternates attention with pyramid up-interpolation, Stage 2 sums
//! convolved up-sampled token maps into a feature map, and Stage 3 decodes it
//! into an image tensor. Every stage can run with exact softmax attention or
//! with the polynomial low-rank approximation, and reports scalar operation
//! counts plus a guaranteed bound on the difference between the two modes.

pub mod attention;
pub mod conv;
pub mod counter;
pub mod error;
pub mod metrics;
pub mod pipeline;
pub mod pyramid;
pub mod rng;
pub mod schedule;
pub mod tensor;

pub use attention::exact::{attn_exact, attn_matrix};
pub use attention::fast::{attn_fast, build_factors, select_degree, ApproxConfig, LowRankFactors};
pub use attention::features::{feature_map, PolyFeatureMap};
pub use attention::AttentionParams;
pub use conv::{conv_forward, resnet_forward, ConvKernelSet, ResNetBlock};
pub use counter::{OpCount, OpCounter, Stage};
pub use error::{Error, Result};
pub use pipeline::{run_end_to_end, ExecutionMode, ModelConfig, RunTrace, VarModel};
pub use pyramid::{kernel_eval, pyramid_up, up_interpolate, KernelChoice};
pub use rng::Rng;
pub use schedule::PyramidSchedule;
pub use tensor::{clip_entries, flatten, inf_norm_diff, reshape_to_pyramid, FlatMatrix, TokenMap};
