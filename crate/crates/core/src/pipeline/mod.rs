//! The three-stage pipeline: transformer over the token pyramid, feature-map
//! reconstruction, and decoding, each in EXACT or FAST attention mode.

pub mod bounds;
pub mod decoder;
pub mod trace;

use std::fmt;
use std::str::FromStr;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::attention::exact::attn_exact_counted;
use crate::attention::fast::{attn_fast_detailed, ApproxConfig, FastAttention};
use crate::attention::AttentionParams;
use crate::conv::{conv_forward_counted, ConvKernelSet};
use crate::counter::{OpCount, OpCounter};
use crate::error::{Error, Result};
use crate::pyramid::{pyramid_up_counted, up_interpolate_counted, KernelChoice};
use crate::rng::Rng;
use crate::schedule::PyramidSchedule;
use crate::tensor::{flatten, reshape_to_pyramid, FlatMatrix, TokenMap};

pub use decoder::{decode, decode_counted, DecodeOutput, DecoderLayer, DecoderPreset, DecoderSpec};
pub use trace::{LayerTrace, RunTrace, StepTrace, WallTimes};

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ExecutionMode {
    #[default]
    Exact,
    Fast,
}

impl ExecutionMode {
    pub const BOTH: [ExecutionMode; 2] = [ExecutionMode::Exact, ExecutionMode::Fast];
}

impl FromStr for ExecutionMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "exact" => Ok(Self::Exact),
            "fast" => Ok(Self::Fast),
            other => Err(Error::InvalidConfig(format!("unknown mode '{other}'"))),
        }
    }
}

impl fmt::Display for ExecutionMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::Exact => "exact",
            Self::Fast => "fast",
        })
    }
}

/// Shape and approximation knobs of a model; weights come from the seed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub alpha: usize,
    pub num_scales: usize,
    pub d: usize,
    pub r_bound: f64,
    pub delta: f64,
    pub g_max: usize,
    pub kernel: KernelChoice,
    pub decoder: DecoderPreset,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            alpha: 2,
            num_scales: 4,
            d: 4,
            r_bound: 0.5,
            delta: 1e-6,
            g_max: 24,
            kernel: KernelChoice::CubicBSpline,
            decoder: DecoderPreset::Compact,
        }
    }
}

impl ModelConfig {
    pub fn validate(&self) -> Result<()> {
        self.schedule()?;
        self.approx()?;
        if self.d == 0 {
            return Err(Error::InvalidConfig("d must be >= 1".into()));
        }
        Ok(())
    }

    pub fn schedule(&self) -> Result<PyramidSchedule> {
        PyramidSchedule::new(self.alpha, self.num_scales)
    }

    pub fn approx(&self) -> Result<ApproxConfig> {
        ApproxConfig::new(self.delta, self.g_max, self.r_bound)
    }
}

/// All seeded weights of one pipeline instance.
#[derive(Debug, Clone, PartialEq)]
pub struct VarModel {
    pub schedule: PyramidSchedule,
    pub attn_params: Vec<AttentionParams>,
    pub stage2_convs: Vec<ConvKernelSet>,
    pub decoder: DecoderSpec,
    pub approx: ApproxConfig,
    pub kernel: KernelChoice,
}

impl VarModel {
    /// Draws every weight group from its own named stream of `seed`.
    pub fn from_seed(seed: u64, cfg: &ModelConfig) -> Result<Self> {
        cfg.validate()?;
        let schedule = cfg.schedule()?;
        let root = Rng::new(seed);
        let (d, r) = (cfg.d, cfg.r_bound);
        let attn_params = (0..cfg.num_scales)
            .map(|k| AttentionParams::random(d, r, &mut root.named(&format!("stage1/{k}"))))
            .collect();
        let stage2_convs = (0..cfg.num_scales)
            .map(|k| ConvKernelSet::random(d, d, r, &mut root.named(&format!("stage2/{k}"))))
            .collect();
        let decoder = DecoderSpec::from_preset(cfg.decoder, d, r, cfg.kernel, &root);
        Ok(Self { schedule, attn_params, stage2_convs, decoder, approx: cfg.approx()?, kernel: cfg.kernel })
    }

    pub fn dim(&self) -> usize {
        self.attn_params[0].dim()
    }
}

/// The `1 x 1 x d` start token, uniform on `[-R, R]`.
pub fn initial_token(seed: u64, cfg: &ModelConfig) -> TokenMap {
    let mut rng = Rng::new(seed).named("x_init");
    TokenMap::random(1, 1, cfg.d, cfg.r_bound, &mut rng)
}

/// Output of one attention layer in either mode.
#[derive(Debug, Clone, PartialEq)]
pub struct AttentionOutcome {
    pub output: FlatMatrix,
    /// Present in FAST mode.
    pub fast: Option<FastAttention>,
}

pub fn run_attention(
    x: &FlatMatrix,
    p: &AttentionParams,
    mode: ExecutionMode,
    approx: &ApproxConfig,
    ops: &mut OpCount,
) -> Result<AttentionOutcome> {
    match mode {
        ExecutionMode::Exact => Ok(AttentionOutcome { output: attn_exact_counted(x, p, ops)?, fast: None }),
        ExecutionMode::Fast => {
            let f = attn_fast_detailed(x, p, approx, ops)?;
            Ok(AttentionOutcome { output: f.output.clone(), fast: Some(f) })
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Stage1Output {
    /// `L_K x d`.
    pub output: FlatMatrix,
    pub steps: Vec<StepTrace>,
    pub error_bound: f64,
}

pub fn var_transformer(x_init: &TokenMap, model: &VarModel, mode: ExecutionMode) -> Result<Stage1Output> {
    var_transformer_counted(x_init, model, mode, &mut OpCounter::default())
}

/// `Z_0 = x_init`, `Z_k = flatten(pyramid_up(x_init, reshape(Attn_k(Z_{k-1}))))`,
/// returning `Attn_K(Z_{K-1})`.
pub fn var_transformer_counted(
    x_init: &TokenMap,
    model: &VarModel,
    mode: ExecutionMode,
    counter: &mut OpCounter,
) -> Result<Stage1Output> {
    let d = model.dim();
    if x_init.shape() != (1, 1, d) {
        return Err(Error::dims(format!("initial token must be 1x1x{d}, got {:?}", x_init.shape())));
    }
    let schedule = &model.schedule;
    let big_k = schedule.num_scales();
    let fast = mode == ExecutionMode::Fast;
    let mut z = x_init.to_matrix();
    let mut eps = 0.0;
    let mut steps = Vec::with_capacity(big_k);
    for k in 1..=big_k {
        let p = &model.attn_params[k - 1];
        let out = run_attention(&z, p, mode, &model.approx, &mut counter.stage1_attn)?;
        let mut step = StepTrace {
            step: k,
            tokens: z.rows(),
            degree: None,
            k_feat: None,
            score_bound: None,
            delta_prime: None,
            error_bound: 0.0,
        };
        if let Some(f) = &out.fast {
            eps = bounds::attention_layer(eps, &z, p, f.delta_prime, f.score_bound, f.k_feat);
            step.degree = Some(f.degree);
            step.k_feat = Some(f.k_feat);
            step.score_bound = Some(f.score_bound);
            step.delta_prime = Some(f.delta_prime);
            step.error_bound = eps;
        }
        steps.push(step);
        if k == big_k {
            return Ok(Stage1Output { output: out.output, steps, error_bound: eps });
        }
        let maps = reshape_to_pyramid(&out.output, schedule, k)?;
        let ups = pyramid_up_counted(x_init, &maps, schedule, model.kernel, &mut counter.stage1_up)?;
        if fast {
            let mut worst: f64 = 0.0;
            for (r, m) in maps.iter().enumerate() {
                let (s, t) = (schedule.side(r), schedule.side(r + 1));
                let gain = bounds::up_gain(model.kernel, s, s, t, t);
                worst = worst.max(bounds::up_layer(eps, m.inf_norm(), gain));
            }
            eps = worst;
        }
        z = flatten(&ups)?;
    }
    unreachable!("schedule has at least one scale")
}

pub fn reconstruct_feature_map(maps: &[TokenMap], model: &VarModel) -> Result<TokenMap> {
    Ok(reconstruct_counted(maps, model, 0.0, &mut OpCount::default())?.0)
}

/// `sum_k conv_k(up(r_k, n, n))`, `k` ascending, with the bound for an input
/// error `eps_in` on every map.
pub fn reconstruct_counted(
    maps: &[TokenMap],
    model: &VarModel,
    eps_in: f64,
    ops: &mut OpCount,
) -> Result<(TokenMap, f64)> {
    let schedule = &model.schedule;
    let big_k = schedule.num_scales();
    if maps.len() != big_k {
        return Err(Error::dims(format!("expected {big_k} token maps, got {}", maps.len())));
    }
    let n = schedule.final_side();
    let mut acc: Option<TokenMap> = None;
    let mut eps = 0.0;
    for (r, (m, conv)) in maps.iter().zip(&model.stage2_convs).enumerate() {
        let side = schedule.side(r);
        if m.height() != side || m.width() != side {
            return Err(Error::dims(format!("scale {r} expected {side}x{side}, got {:?}", m.shape())));
        }
        let up = up_interpolate_counted(m, n, n, model.kernel, ops)?;
        let y = conv_forward_counted(&up, conv, ops)?;
        let gain = bounds::up_gain(model.kernel, side, side, n, n);
        let e_up = bounds::up_layer(eps_in, m.inf_norm(), gain);
        eps += bounds::conv_layer(e_up, up.inf_norm(), conv);
        acc = Some(match acc {
            None => y,
            Some(a) => {
                eps += 4.0 * f64::EPSILON * (a.inf_norm() + y.inf_norm());
                a.add(&y, ops)?
            }
        });
    }
    Ok((acc.expect("at least one scale"), eps))
}

/// Image tensor and trace of one seeded run.
#[derive(Debug, Clone, PartialEq)]
pub struct RunOutput {
    pub image: TokenMap,
    pub trace: RunTrace,
}

pub fn run_end_to_end(seed: u64, cfg: &ModelConfig, mode: ExecutionMode) -> Result<RunOutput> {
    let start = Instant::now();
    let model = VarModel::from_seed(seed, cfg)?;
    let x_init = initial_token(seed, cfg);
    let fast = mode == ExecutionMode::Fast;
    let mut counters = OpCounter::default();

    let t1 = Instant::now();
    let s1 = var_transformer_counted(&x_init, &model, mode, &mut counters)?;
    let stage1_ms = ms(t1);

    let t2 = Instant::now();
    let maps = reshape_to_pyramid(&s1.output, &model.schedule, model.schedule.num_scales())?;
    let (fm, stage2_bound) = reconstruct_counted(&maps, &model, s1.error_bound, &mut counters.stage2)?;
    let stage2_ms = ms(t2);

    let t3 = Instant::now();
    let dec = decode_counted(&fm, &model.decoder, mode, &model.approx, stage2_bound, &mut counters.stage3)?;
    let stage3_ms = ms(t3);

    let (h, w, c) = dec.image.shape();
    let trace = RunTrace {
        seed,
        mode,
        config: cfg.clone(),
        image_shape: [h, w, c],
        stage1: s1.steps,
        stage2_bound: if fast { stage2_bound } else { 0.0 },
        stage3: dec.layers,
        composed_bound: if fast { dec.error_bound } else { 0.0 },
        counters,
        wall_ms: WallTimes { stage1: stage1_ms, stage2: stage2_ms, stage3: stage3_ms, total: ms(start) },
    };
    Ok(RunOutput { image: dec.image, trace })
}

fn ms(t: Instant) -> f64 {
    t.elapsed().as_secs_f64() * 1e3
}
