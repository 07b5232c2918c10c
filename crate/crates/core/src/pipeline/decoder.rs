//! Stage 3: a constant-depth decoder built from residual blocks, attention,
//! 2x up-interpolation and a final channel-mapping convolution.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::attention::fast::ApproxConfig;
use crate::attention::AttentionParams;
use crate::conv::{conv_forward_counted, ConvKernelSet, ResNetBlock};
use crate::counter::OpCount;
use crate::error::{Error, Result};
use crate::pyramid::{up_interpolate_counted, KernelChoice};
use crate::rng::Rng;
use crate::tensor::TokenMap;

use super::bounds;
use super::trace::LayerTrace;
use super::{run_attention, ExecutionMode};

pub const MAX_DEPTH: usize = 8;
pub const IMAGE_CHANNELS: usize = 3;

#[derive(Debug, Clone, PartialEq)]
pub enum DecoderLayer {
    ResNet(ResNetBlock),
    Attention(AttentionParams),
    /// Doubles height and width.
    UpInterp,
    FinalConv(ConvKernelSet),
}

impl DecoderLayer {
    pub fn name(&self) -> &'static str {
        match self {
            DecoderLayer::ResNet(_) => "resnet",
            DecoderLayer::Attention(_) => "attention",
            DecoderLayer::UpInterp => "up_interp",
            DecoderLayer::FinalConv(_) => "final_conv",
        }
    }
}

/// Layer orderings available from configuration.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DecoderPreset {
    /// ResNet, UpInterp, Attention, FinalConv: attention runs at the output
    /// resolution.
    #[default]
    Compact,
    /// ResNet, Attention, UpInterp, ResNet, FinalConv: attention runs at the
    /// feature-map resolution.
    Classic,
}

impl FromStr for DecoderPreset {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "compact" => Ok(Self::Compact),
            "classic" => Ok(Self::Classic),
            other => Err(Error::InvalidConfig(format!("unknown decoder preset '{other}'"))),
        }
    }
}

impl fmt::Display for DecoderPreset {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::Compact => "compact",
            Self::Classic => "classic",
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DecoderSpec {
    layers: Vec<DecoderLayer>,
    kernel: KernelChoice,
    in_channels: usize,
}

impl DecoderSpec {
    /// Checks depth and that channel counts chain from `in_channels`.
    pub fn new(layers: Vec<DecoderLayer>, kernel: KernelChoice, in_channels: usize) -> Result<Self> {
        if layers.is_empty() || layers.len() > MAX_DEPTH {
            return Err(Error::InvalidConfig(format!(
                "decoder depth must be in 1..={MAX_DEPTH}, got {}",
                layers.len()
            )));
        }
        let mut c = in_channels;
        for (i, layer) in layers.iter().enumerate() {
            let expects = match layer {
                DecoderLayer::ResNet(b) => b.channels(),
                DecoderLayer::Attention(p) => p.dim(),
                DecoderLayer::UpInterp => c,
                DecoderLayer::FinalConv(k) => k.c_in(),
            };
            if expects != c {
                return Err(Error::dims(format!("decoder layer {i} expects {expects} channels, gets {c}")));
            }
            if let DecoderLayer::FinalConv(k) = layer {
                c = k.c_out();
            }
        }
        Ok(Self { layers, kernel, in_channels })
    }

    pub fn from_preset(preset: DecoderPreset, d: usize, r_bound: f64, kernel: KernelChoice, rng: &Rng) -> Self {
        use DecoderLayer::*;
        let stream = |i: usize| rng.named(&format!("decoder/{i}"));
        let kinds: &[&str] = match preset {
            DecoderPreset::Compact => &["resnet", "up", "attn", "final"],
            DecoderPreset::Classic => &["resnet", "attn", "up", "resnet", "final"],
        };
        let layers = kinds
            .iter()
            .enumerate()
            .map(|(i, kind)| match *kind {
                "resnet" => ResNet(ResNetBlock::random(d, r_bound, &mut stream(i))),
                "attn" => Attention(AttentionParams::random(d, r_bound, &mut stream(i))),
                "up" => UpInterp,
                _ => FinalConv(ConvKernelSet::random(d, IMAGE_CHANNELS, r_bound, &mut stream(i))),
            })
            .collect();
        Self::new(layers, kernel, d).expect("presets chain d channels")
    }

    pub fn layers(&self) -> &[DecoderLayer] {
        &self.layers
    }

    pub fn kernel(&self) -> KernelChoice {
        self.kernel
    }

    pub fn in_channels(&self) -> usize {
        self.in_channels
    }

    pub fn depth(&self) -> usize {
        self.layers.len()
    }
}

/// Decoder result with the FAST-vs-EXACT bound propagated from `eps_in`.
#[derive(Debug, Clone, PartialEq)]
pub struct DecodeOutput {
    pub image: TokenMap,
    pub layers: Vec<LayerTrace>,
    pub error_bound: f64,
}

pub fn decode(fm: &TokenMap, spec: &DecoderSpec, mode: ExecutionMode, approx: &ApproxConfig) -> Result<TokenMap> {
    Ok(decode_counted(fm, spec, mode, approx, 0.0, &mut OpCount::default())?.image)
}

pub fn decode_counted(
    fm: &TokenMap,
    spec: &DecoderSpec,
    mode: ExecutionMode,
    approx: &ApproxConfig,
    eps_in: f64,
    ops: &mut OpCount,
) -> Result<DecodeOutput> {
    if fm.channels() != spec.in_channels {
        return Err(Error::dims(format!(
            "feature map has {} channels, decoder expects {}",
            fm.channels(),
            spec.in_channels
        )));
    }
    let fast = mode == ExecutionMode::Fast;
    let mut x = fm.clone();
    let mut eps = if fast { eps_in } else { 0.0 };
    let mut traces = Vec::with_capacity(spec.layers.len());
    for layer in &spec.layers {
        let x_norm = x.inf_norm();
        let (mut degree, mut k_feat, mut delta_prime) = (None, None, None);
        let (next, bound) = match layer {
            DecoderLayer::ResNet(block) => {
                let mid = conv_forward_counted(&x, &block.conv1, ops)?;
                let mid_norm = mid.inf_norm();
                let inner = conv_forward_counted(&mid, &block.conv2, ops)?;
                let y = x.add(&inner, ops)?;
                (y, bounds::resnet_layer(eps, x_norm, mid_norm, block))
            }
            DecoderLayer::Attention(p) => {
                let (h, w, _) = x.shape();
                let flat = x.to_matrix();
                let out = run_attention(&flat, p, mode, approx, ops)?;
                let bound = match &out.fast {
                    Some(f) => {
                        degree = Some(f.degree);
                        k_feat = Some(f.k_feat);
                        delta_prime = Some(f.delta_prime);
                        bounds::attention_layer(eps, &flat, p, f.delta_prime, f.score_bound, f.k_feat)
                    }
                    None => 0.0,
                };
                (out.output.to_token_map(h, w)?, bound)
            }
            DecoderLayer::UpInterp => {
                let (h, w, _) = x.shape();
                let y = up_interpolate_counted(&x, 2 * h, 2 * w, spec.kernel, ops)?;
                let gain = bounds::up_gain(spec.kernel, h, w, 2 * h, 2 * w);
                (y, bounds::up_layer(eps, x_norm, gain))
            }
            DecoderLayer::FinalConv(k) => {
                let y = conv_forward_counted(&x, k, ops)?;
                (y, bounds::conv_layer(eps, x_norm, k))
            }
        };
        if fast {
            eps = bound;
        }
        let (h, w, c) = next.shape();
        traces.push(LayerTrace {
            layer: layer.name().to_string(),
            output_shape: [h, w, c],
            degree,
            k_feat,
            delta_prime,
            error_bound: eps,
        });
        x = next;
    }
    Ok(DecodeOutput { image: x, layers: traces, error_bound: eps })
}
