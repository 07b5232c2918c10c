//! Flat `key = value` experiment files merged with command-line overrides.

use std::collections::BTreeMap;
use std::path::Path;
use std::str::FromStr;

use anyhow::{bail, Context, Result};
use serde::Serialize;
use varfast::pipeline::DecoderPreset;
use varfast::{ExecutionMode, KernelChoice, ModelConfig};

pub const KEYS: [&str; 10] =
    ["seed", "alpha", "num_scales", "d", "r_bound", "delta", "g_max", "kernel", "mode", "decoder_depth"];

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunConfig {
    pub seed: u64,
    pub mode: ExecutionMode,
    pub model: ModelConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self { seed: 0, mode: ExecutionMode::Exact, model: ModelConfig::default() }
    }
}

/// Reads `key = value` lines; `#` starts a comment.
pub fn parse_pairs(text: &str) -> Result<BTreeMap<String, String>> {
    let mut out = BTreeMap::new();
    for (no, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let Some((k, v)) = line.split_once('=') else {
            bail!("line {}: expected key = value, got '{raw}'", no + 1);
        };
        let (k, v) = (k.trim(), v.trim());
        if !KEYS.contains(&k) {
            bail!("line {}: unknown key '{k}'", no + 1);
        }
        if out.insert(k.to_string(), v.to_string()).is_some() {
            bail!("line {}: duplicate key '{k}'", no + 1);
        }
    }
    Ok(out)
}

fn parse<T: FromStr>(key: &str, value: &str) -> Result<T>
where
    T::Err: std::fmt::Display,
{
    value.parse::<T>().map_err(|e| anyhow::anyhow!("invalid value '{value}' for {key}: {e}"))
}

impl RunConfig {
    /// Applies pairs on top of `self`, then checks ranges.
    pub fn apply(mut self, pairs: &BTreeMap<String, String>) -> Result<Self> {
        for (k, v) in pairs {
            let m = &mut self.model;
            match k.as_str() {
                "seed" => self.seed = parse(k, v)?,
                "alpha" => m.alpha = parse(k, v)?,
                "num_scales" => m.num_scales = parse(k, v)?,
                "d" => m.d = parse(k, v)?,
                "r_bound" => m.r_bound = parse(k, v)?,
                "delta" => m.delta = parse(k, v)?,
                "g_max" => m.g_max = parse(k, v)?,
                "kernel" => m.kernel = v.parse::<KernelChoice>()?,
                "mode" => self.mode = v.parse::<ExecutionMode>()?,
                "decoder_depth" => m.decoder = v.parse::<DecoderPreset>()?,
                other => bail!("unknown key '{other}'"),
            }
        }
        self.validate()?;
        Ok(self)
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        Self::default().apply(&parse_pairs(&text)?)
    }

    pub fn validate(&self) -> Result<()> {
        let m = &self.model;
        let check = |ok: bool, msg: String| if ok { Ok(()) } else { Err(anyhow::anyhow!(msg)) };
        check((2..=8).contains(&m.alpha), format!("alpha must be in 2..=8, got {}", m.alpha))?;
        check((1..=8).contains(&m.num_scales), format!("num_scales must be in 1..=8, got {}", m.num_scales))?;
        check((1..=16).contains(&m.d), format!("d must be in 1..=16, got {}", m.d))?;
        check(m.r_bound > 0.0 && m.r_bound <= 1e6, format!("r_bound must be in (0, 1e6], got {}", m.r_bound))?;
        check(m.delta > 0.0 && m.delta <= 0.1, format!("delta must be in (0, 0.1], got {}", m.delta))?;
        check((1..=40).contains(&m.g_max), format!("g_max must be in 1..=40, got {}", m.g_max))?;
        m.validate()?;
        Ok(())
    }
}
