//! Randomized checks of the error-propagation bounds.
//!
//! Each suite draws `trials` independent cases, trial `i` from substream `i`
//! of the caller's generator, so reports do not depend on thread count or
//! scheduling. A trial's ratio is `lhs / rhs`; it is a violation when the
//! ratio exceeds the suite threshold. Suites whose right-hand side is an
//! explicit constant use threshold 1; the composed attention suite, whose
//! source statement only fixes the constant up to `O(.)`, uses 4.
//! Right-hand sides include a floating-point allowance proportional to the
//! magnitude of the computed quantities.

use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::attention::exact::attn_exact;
use crate::attention::fast::{attn_fast_detailed, ApproxConfig};
use crate::attention::AttentionParams;
use crate::conv::{conv_forward, ConvKernelSet};
use crate::counter::OpCount;
use crate::error::Error;
use crate::pipeline::{run_end_to_end, ExecutionMode, ModelConfig};
use crate::pyramid::{up_interpolate, KernelChoice};
use crate::rng::Rng;
use crate::tensor::{inf_norm_diff, FlatMatrix, TokenMap};

const U: f64 = f64::EPSILON;
pub const EXPLICIT_THRESHOLD: f64 = 1.0;
pub const SAFETY_FACTOR: f64 = 4.0;

/// Parameters and outcome of one trial. Fields that do not apply to a suite
/// are `None`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialRecord {
    pub eps: f64,
    pub r: f64,
    pub g: Option<usize>,
    pub k: Option<usize>,
    pub d: Option<usize>,
    pub c_in: Option<usize>,
    pub lhs: f64,
    pub rhs: f64,
    pub ratio: f64,
}

impl TrialRecord {
    fn new(eps: f64, r: f64, lhs: f64, rhs: f64) -> Self {
        let ratio = if lhs == 0.0 { 0.0 } else { lhs / rhs };
        Self { eps, r, g: None, k: None, d: None, c_in: None, lhs, rhs, ratio }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundReport {
    pub lemma: String,
    pub trials: usize,
    pub violations: usize,
    /// Trials where the fast path could not pick a degree.
    pub skipped: usize,
    pub max_ratio: f64,
    pub threshold: f64,
    pub records: Vec<TrialRecord>,
}

/// The per-suite numbers without the trial list.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundSummary {
    pub trials: usize,
    pub violations: usize,
    pub skipped: usize,
    pub max_ratio: f64,
    pub threshold: f64,
}

impl BoundReport {
    fn collect(lemma: &str, trials: usize, threshold: f64, outcomes: Vec<Option<TrialRecord>>) -> Self {
        let skipped = outcomes.iter().filter(|o| o.is_none()).count();
        let records: Vec<TrialRecord> = outcomes.into_iter().flatten().collect();
        let violations = records.iter().filter(|r| !(r.ratio <= threshold)).count();
        let max_ratio = records.iter().map(|r| r.ratio).fold(0.0, f64::max);
        Self { lemma: lemma.to_string(), trials, violations, skipped, max_ratio, threshold, records }
    }

    pub fn passed(&self) -> bool {
        self.violations == 0
    }

    pub fn summary(&self) -> BoundSummary {
        BoundSummary {
            trials: self.trials,
            violations: self.violations,
            skipped: self.skipped,
            max_ratio: self.max_ratio,
            threshold: self.threshold,
        }
    }
}

fn run_trials<F>(trials: usize, rng: &Rng, f: F) -> Vec<Option<TrialRecord>>
where
    F: Fn(&mut Rng) -> Option<TrialRecord> + Sync,
{
    (0..trials as u64).into_par_iter().map(|i| f(&mut rng.substream(i))).collect()
}

fn log_uniform(rng: &mut Rng, lo: f64, hi: f64) -> f64 {
    rng.uniform(lo.ln(), hi.ln()).exp()
}

/// Polynomial Lipschitz bound:
/// `|f(x) - f(x')| <= (sum_i |a_i| i R^(i-1)) |x - x'|` on `[-R, R]`.
pub fn verify_poly_lipschitz(trials: usize, rng: &Rng) -> BoundReport {
    poly_lipschitz(trials, rng, 1.0)
}

fn poly_lipschitz(trials: usize, rng: &Rng, scale: f64) -> BoundReport {
    let outcomes = run_trials(trials, rng, |rng| {
        let r = rng.uniform(1.0, 3.0);
        let deg = rng.below(9);
        let coeffs = rng.uniform_vec(deg + 1, -1.0, 1.0);
        let x = rng.uniform(-r, r);
        let x2 = rng.uniform(-r, r);
        let mut rec = poly_trial(&coeffs, r, x, x2, scale);
        rec.g = Some(deg);
        Some(rec)
    });
    BoundReport::collect("B1", trials, EXPLICIT_THRESHOLD, outcomes)
}

/// One Lipschitz trial for `f(x) = sum_i coeffs[i] x^i`.
pub fn poly_trial(coeffs: &[f64], r: f64, x: f64, x2: f64, scale: f64) -> TrialRecord {
    let horner = |t: f64| coeffs.iter().rev().fold(0.0, |acc, a| acc * t + a);
    let lhs = (horner(x) - horner(x2)).abs();
    let constant: f64 = coeffs.iter().enumerate().skip(1).map(|(i, a)| a.abs() * i as f64 * r.powi(i as i32 - 1)).sum();
    let magnitude: f64 = coeffs.iter().enumerate().map(|(i, a)| a.abs() * r.powi(i as i32)).sum();
    let rounding = 8.0 * U * coeffs.len() as f64 * magnitude;
    TrialRecord::new((x - x2).abs(), r, lhs, scale * (constant * (x - x2).abs() + rounding))
}

/// Inner-product perturbation:
/// `|<u', v'> - <u, v>| <= 2 k eps R + k eps^2` for `u, v` in `[-R, R]^k`.
pub fn verify_inner_product(trials: usize, rng: &Rng) -> BoundReport {
    inner_product(trials, rng, 1.0)
}

fn inner_product(trials: usize, rng: &Rng, scale: f64) -> BoundReport {
    let outcomes = run_trials(trials, rng, |rng| {
        let k = 1 + rng.below(16);
        let r = rng.uniform(0.1, 3.0);
        let eps = log_uniform(rng, 1e-9, 1e-1);
        let u = rng.uniform_vec(k, -r, r);
        let v = rng.uniform_vec(k, -r, r);
        let u2: Vec<f64> = u.iter().map(|a| a + rng.uniform(-eps, eps)).collect();
        let v2: Vec<f64> = v.iter().map(|a| a + rng.uniform(-eps, eps)).collect();
        Some(inner_product_trial(&u, &v, &u2, &v2, r, eps, scale))
    });
    BoundReport::collect("B2", trials, EXPLICIT_THRESHOLD, outcomes)
}

pub fn inner_product_trial(u: &[f64], v: &[f64], u2: &[f64], v2: &[f64], r: f64, eps: f64, scale: f64) -> TrialRecord {
    let dot = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(x, y)| x * y).sum::<f64>();
    let k = u.len() as f64;
    let lhs = (dot(u2, v2) - dot(u, v)).abs();
    let rounding = 4.0 * U * k * (r + eps).powi(2);
    let mut rec = TrialRecord::new(eps, r, lhs, scale * (2.0 * k * eps * r + k * eps * eps + rounding));
    rec.k = Some(u.len());
    rec
}

/// Perturbed input through the fast layer against the exact layer:
/// `||AAttC(X') - Attn(X)||_inf <= C k_feat Rh^(g+1) d eps + delta'` with
/// `Rh = max(1, R)` and `C` read off the chain
/// `||Q' - Q|| <= d eps ||W_Q||` (and likewise for `K`, `V`),
/// score shift `eta <= d (||Q'|| eps_K + ||K|| eps_Q)`, and softmax weights
/// moving by at most a factor `e^(2 eta)`, which give
/// `C = ||W_V|| + 2 d e^(2 eta) ||V|| (||Q'|| ||W_K|| + ||K|| ||W_Q||)`.
pub fn verify_attention_error(trials: usize, rng: &Rng) -> BoundReport {
    attention_error(trials, rng, 1.0)
}

fn attention_error(trials: usize, rng: &Rng, scale: f64) -> BoundReport {
    let outcomes = run_trials(trials, rng, |rng| {
        let l = 1 + rng.below(64);
        let d = if rng.below(2) == 0 { 2 } else { 4 };
        let r = 0.5;
        let eps = log_uniform(rng, 1e-8, 1e-3);
        let delta = [1e-4, 1e-6, 1e-8][rng.below(3)];
        let p = AttentionParams::random(d, r, rng);
        let x = FlatMatrix::random(l, d, r, rng);
        let noise = FlatMatrix::random(l, d, eps, rng);
        let x2 = FlatMatrix::new(l, d, x.data().iter().zip(noise.data()).map(|(a, b)| a + b).collect()).ok()?;
        attention_trial(&x, &x2, &p, delta, scale).ok()
    });
    BoundReport::collect("B4", trials, SAFETY_FACTOR, outcomes)
}

/// One composed-attention trial; `Err` when the fast path cannot pick a
/// degree.
pub fn attention_trial(
    x: &FlatMatrix,
    x2: &FlatMatrix,
    p: &AttentionParams,
    delta: f64,
    scale: f64,
) -> Result<TrialRecord, Error> {
    let (l, d) = x.shape();
    let df = d as f64;
    let r = p.entry_bound;
    let cfg = ApproxConfig::new(delta, 24, r)?;
    let fast = attn_fast_detailed(x2, p, &cfg, &mut OpCount::default())?;
    let exact = attn_exact(x, p)?;
    let lhs = inf_norm_diff(&fast.output, &exact)?;

    let eps = inf_norm_diff(x, x2)?;
    let (q2, k2, v2) = p.project(x2, &mut OpCount::default())?;
    let (wq, wk, wv) = (p.w_q.inf_norm(), p.w_k.inf_norm(), p.w_v.inf_norm());
    let (eps_q, eps_k) = (df * eps * wq, df * eps * wk);
    let k_exact = k2.inf_norm() + eps_k;
    let v_exact = v2.inf_norm() + df * eps * wv;
    let eta = df * (q2.inf_norm() * eps_k + k_exact * eps_q);
    let c = wv + 2.0 * df * (2.0 * eta).exp() * v_exact * (q2.inf_norm() * wk + k_exact * wq);
    let r_hat = r.max(1.0);
    let chain = c * fast.k_feat as f64 * r_hat.powi(fast.degree as i32 + 1) * df * eps;
    let rounding = 4.0 * U * v_exact * ((2 * l + fast.k_feat) as f64 + df) * (2.0 * fast.score_bound).exp();
    let mut rec = TrialRecord::new(eps, r, lhs, scale * (chain + fast.delta_prime + rounding));
    rec.g = Some(fast.degree);
    rec.k = Some(fast.k_feat);
    rec.d = Some(d);
    Ok(rec)
}

/// Up-interpolation is non-expansive with the normalized B-spline.
pub fn verify_upinterp_nonexpansive(trials: usize, rng: &Rng) -> BoundReport {
    upinterp(trials, rng, 1.0)
}

fn upinterp(trials: usize, rng: &Rng, scale: f64) -> BoundReport {
    let outcomes = run_trials(trials, rng, |rng| {
        let (h, w, d) = (1 + rng.below(6), 1 + rng.below(6), 1 + rng.below(3));
        let (th, tw) = (h + rng.below(2 * h + 3), w + rng.below(2 * w + 3));
        let mag = rng.uniform(0.1, 4.0);
        let eps = log_uniform(rng, 1e-9, 1.0);
        let x = TokenMap::random(h, w, d, mag, rng);
        let noise = TokenMap::random(h, w, d, eps, rng);
        let x2 = x.add(&noise, &mut OpCount::default()).ok()?;
        upinterp_trial(&x, &x2, th, tw, scale).ok()
    });
    BoundReport::collect("B5", trials, EXPLICIT_THRESHOLD, outcomes)
}

pub fn upinterp_trial(x: &TokenMap, x2: &TokenMap, th: usize, tw: usize, scale: f64) -> Result<TrialRecord, Error> {
    let choice = KernelChoice::CubicBSpline;
    let y = up_interpolate(x, th, tw, choice)?;
    let y2 = up_interpolate(x2, th, tw, choice)?;
    let eps = inf_norm_diff(x, x2)?;
    let rounding = 16.0 * U * x.inf_norm().max(x2.inf_norm());
    let mut rec = TrialRecord::new(eps, 1.0, inf_norm_diff(&y, &y2)?, scale * (eps + rounding));
    rec.d = Some(x.channels());
    Ok(rec)
}

/// Convolution Lipschitz bound `9 c_in R eps`.
pub fn verify_conv_error(trials: usize, rng: &Rng) -> BoundReport {
    conv_error(trials, rng, 1.0)
}

fn conv_error(trials: usize, rng: &Rng, scale: f64) -> BoundReport {
    let outcomes = run_trials(trials, rng, |rng| {
        let (c_in, c_out) = (1 + rng.below(4), 1 + rng.below(3));
        let (h, w) = (1 + rng.below(6), 1 + rng.below(6));
        let r = rng.uniform(0.1, 2.0);
        let eps = log_uniform(rng, 1e-9, 1.0);
        let kernels = rng.uniform_vec(c_out * 9 * c_in, -r, r);
        let bias = rng.uniform(-r, r);
        let k = ConvKernelSet::new(c_in, c_out, kernels, bias).ok()?;
        let x = TokenMap::random(h, w, c_in, 1.0, rng);
        let noise = TokenMap::random(h, w, c_in, eps, rng);
        let x2 = x.add(&noise, &mut OpCount::default()).ok()?;
        conv_trial(&x, &x2, &k, r, scale).ok()
    });
    BoundReport::collect("C1", trials, EXPLICIT_THRESHOLD, outcomes)
}

pub fn conv_trial(x: &TokenMap, x2: &TokenMap, k: &ConvKernelSet, r: f64, scale: f64) -> Result<TrialRecord, Error> {
    let y = conv_forward(x, k)?;
    let y2 = conv_forward(x2, k)?;
    let eps = inf_norm_diff(x, x2)?;
    let c = 9.0 * k.c_in() as f64;
    let magnitude = c * r * x.inf_norm().max(x2.inf_norm()) + k.bias().abs();
    let rounding = 8.0 * U * (c + 1.0) * magnitude;
    let mut rec = TrialRecord::new(eps, r, inf_norm_diff(&y, &y2)?, scale * (c * r * eps + rounding));
    rec.c_in = Some(k.c_in());
    Ok(rec)
}

/// End-to-end FAST against EXACT over seeds `first_seed ..`, checked against
/// the composed bound in the FAST trace.
pub fn verify_mode_equivalence(seeds: usize, first_seed: u64, cfg: &ModelConfig) -> BoundReport {
    mode_equivalence(seeds, first_seed, cfg, 1.0)
}

fn mode_equivalence(seeds: usize, first_seed: u64, cfg: &ModelConfig, scale: f64) -> BoundReport {
    let outcomes: Vec<Option<TrialRecord>> = (0..seeds as u64)
        .into_par_iter()
        .map(|i| {
            let seed = first_seed.wrapping_add(i);
            let fast = run_end_to_end(seed, cfg, ExecutionMode::Fast).ok()?;
            let exact = run_end_to_end(seed, cfg, ExecutionMode::Exact).ok()?;
            let lhs = inf_norm_diff(&fast.image, &exact.image).ok()?;
            let mut rec = TrialRecord::new(0.0, cfg.r_bound, lhs, scale * fast.trace.composed_bound);
            rec.d = Some(cfg.d);
            rec.g = fast.trace.stage1.iter().filter_map(|s| s.degree).max();
            Some(rec)
        })
        .collect();
    BoundReport::collect("mode_equiv", seeds, EXPLICIT_THRESHOLD, outcomes)
}

/// Trial counts per suite for [`run_all`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SuiteSizes {
    /// B1, B2, B5 and C1.
    pub scalar: usize,
    pub attention: usize,
    pub mode_equiv: usize,
}

impl SuiteSizes {
    /// `trials` for the scalar suites, a fifth of that for B4 and a tenth
    /// for the end-to-end comparison, each at least one.
    pub fn from_trials(trials: usize) -> Self {
        Self { scalar: trials.max(1), attention: (trials / 5).max(1), mode_equiv: (trials / 10).max(1) }
    }
}

/// Runs all six suites. `rhs_scale` multiplies every right-hand side; 1 is
/// the real check and values below 1 serve as a negative control.
pub fn run_all(sizes: SuiteSizes, seed: u64, cfg: &ModelConfig, rhs_scale: f64) -> BTreeMap<String, BoundReport> {
    let root = Rng::new(seed);
    let suites = [
        poly_lipschitz(sizes.scalar, &root.named("B1"), rhs_scale),
        inner_product(sizes.scalar, &root.named("B2"), rhs_scale),
        attention_error(sizes.attention, &root.named("B4"), rhs_scale),
        upinterp(sizes.scalar, &root.named("B5"), rhs_scale),
        conv_error(sizes.scalar, &root.named("C1"), rhs_scale),
        mode_equivalence(sizes.mode_equiv, seed, cfg, rhs_scale),
    ];
    suites.into_iter().map(|r| (r.lemma.clone(), r)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn square_example() {
        let rec = poly_trial(&[0.0, 0.0, 1.0], 2.0, 1.0, 1.1, 1.0);
        assert!((rec.lhs - 0.21).abs() < 1e-12);
        assert!((rec.rhs - 0.4).abs() < 1e-9);
        assert!(rec.ratio < 1.0);
    }

    #[test]
    fn constant_polynomial_has_zero_lhs() {
        let rec = poly_trial(&[0.7], 2.0, -1.5, 1.9, 1.0);
        assert_eq!(rec.lhs, 0.0);
        assert_eq!(rec.ratio, 0.0);
    }

    #[test]
    fn inner_product_example() {
        let rec = inner_product_trial(&[1.0, 1.0], &[1.0, 1.0], &[1.1, 1.0], &[1.0, 1.0], 1.1, 0.1, 1.0);
        assert!((rec.lhs - 0.1).abs() < 1e-12);
        assert!(rec.rhs >= 0.44);
        let zero = inner_product_trial(&[0.3, -0.2], &[0.5, 0.5], &[0.3, -0.2], &[0.5, 0.5], 1.0, 0.0, 1.0);
        assert_eq!(zero.lhs, 0.0);
    }

    #[test]
    fn attention_without_perturbation_is_delta_prime_contract() {
        let mut rng = Rng::new(8);
        let p = AttentionParams::random(2, 0.5, &mut rng);
        let x = FlatMatrix::random(8, 2, 0.5, &mut rng);
        let rec = attention_trial(&x, &x, &p, 1e-8, 1.0).unwrap();
        assert_eq!(rec.eps, 0.0);
        assert!(rec.ratio <= 1.0);
    }

    #[test]
    fn attention_small_perturbation() {
        let mut rng = Rng::new(9);
        let p = AttentionParams::random(2, 0.5, &mut rng);
        let x = FlatMatrix::random(8, 2, 0.5, &mut rng);
        let noise = FlatMatrix::random(8, 2, 1e-4, &mut rng);
        let x2 = FlatMatrix::new(8, 2, x.data().iter().zip(noise.data()).map(|(a, b)| a + b).collect()).unwrap();
        let rec = attention_trial(&x, &x2, &p, 1e-8, 1.0).unwrap();
        assert!(rec.ratio < 1.0, "ratio {}", rec.ratio);
    }

    #[test]
    fn constant_shift_moves_interpolation_by_exactly_eps() {
        let mut rng = Rng::new(10);
        let x = TokenMap::random(3, 4, 2, 1.0, &mut rng);
        let x2 = TokenMap::from_fn(3, 4, 2, |i, j, c| x.get(i, j, c) + 0.25);
        let rec = upinterp_trial(&x, &x2, 7, 9, 1.0).unwrap();
        assert!((rec.lhs - 0.25).abs() < 1e-14);
        assert!(rec.ratio <= 1.0);
        let same = upinterp_trial(&x, &x, 7, 9, 1.0).unwrap();
        assert_eq!(same.lhs, 0.0);
    }

    #[test]
    fn conv_bound_is_tight_for_ones() {
        let k = ConvKernelSet::new(1, 1, vec![1.0; 9], 0.0).unwrap();
        let x = TokenMap::zeros(5, 5, 1);
        let x2 = TokenMap::filled(5, 5, 1, 1e-3);
        let rec = conv_trial(&x, &x2, &k, 1.0, 1.0).unwrap();
        assert!((rec.lhs - 9e-3).abs() < 1e-15);
        assert!(rec.ratio <= 1.0 && rec.ratio > 1.0 - 1e-9);
        let zero = conv_trial(&x, &x2, &ConvKernelSet::zeros(1, 1, 0.0), 1.0, 1.0).unwrap();
        assert_eq!(zero.lhs, 0.0);
    }

    #[test]
    fn reports_are_thread_independent() {
        let rng = Rng::new(11);
        let a = verify_conv_error(50, &rng);
        let pool = rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap();
        let b = pool.install(|| verify_conv_error(50, &rng));
        assert_eq!(a, b);
    }

    #[test]
    fn shrunk_constant_is_caught() {
        let rng = Rng::new(12);
        assert!(conv_error(200, &rng, 1e-3).violations > 0);
        assert!(poly_lipschitz(200, &rng, 1e-3).violations > 0);
    }
}
