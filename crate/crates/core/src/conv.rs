//! 3x3 convolution with stride 1 and zero padding 1, plus the residual block.

use crate::counter::OpCount;
use crate::error::{Error, Result};
use crate::rng::Rng;
use crate::tensor::{inf_norm, TokenMap};

/// `c_out` kernels of shape `3 x 3 x c_in` sharing one scalar bias.
///
/// Kernel entries are stored as `[l][m][n][c]`.
#[derive(Debug, Clone, PartialEq)]
pub struct ConvKernelSet {
    c_in: usize,
    c_out: usize,
    kernels: Vec<f64>,
    bias: f64,
}

impl ConvKernelSet {
    pub fn new(c_in: usize, c_out: usize, kernels: Vec<f64>, bias: f64) -> Result<Self> {
        if c_in == 0 || c_out == 0 {
            return Err(Error::dims("convolution channel counts must be positive"));
        }
        if kernels.len() != c_out * 9 * c_in {
            return Err(Error::dims(format!(
                "expected {} kernel entries for {c_in}->{c_out}, got {}",
                c_out * 9 * c_in,
                kernels.len()
            )));
        }
        if !bias.is_finite() || kernels.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidConfig("convolution weights must be finite".into()));
        }
        Ok(Self { c_in, c_out, kernels, bias })
    }

    pub fn zeros(c_in: usize, c_out: usize, bias: f64) -> Self {
        Self::new(c_in, c_out, vec![0.0; c_out * 9 * c_in], bias).expect("positive channels")
    }

    /// Entries uniform on `[-R, R]`, then scaled by `1 / sqrt(9 c_in)` so the
    /// layer roughly preserves activation scale. The bias gets the same scale.
    pub fn random(c_in: usize, c_out: usize, r_bound: f64, rng: &mut Rng) -> Self {
        let scale = 1.0 / ((9 * c_in) as f64).sqrt();
        let kernels = rng
            .uniform_vec(c_out * 9 * c_in, -r_bound, r_bound)
            .into_iter()
            .map(|v| v * scale)
            .collect();
        let bias = rng.uniform(-r_bound, r_bound) * scale;
        Self { c_in, c_out, kernels, bias }
    }

    pub fn c_in(&self) -> usize {
        self.c_in
    }

    pub fn c_out(&self) -> usize {
        self.c_out
    }

    pub fn bias(&self) -> f64 {
        self.bias
    }

    pub fn kernels(&self) -> &[f64] {
        &self.kernels
    }

    /// `K^l_{m,n,c}` with zero-based `m, n` in `0..3`.
    pub fn weight(&self, l: usize, m: usize, n: usize, c: usize) -> f64 {
        self.kernels[((l * 3 + m) * 3 + n) * self.c_in + c]
    }

    pub fn kernel_inf_norm(&self) -> f64 {
        inf_norm(&self.kernels)
    }

    /// Lipschitz constant of the layer in the max norm, `9 c_in ||K||_inf`.
    pub fn lipschitz(&self) -> f64 {
        9.0 * self.c_in as f64 * self.kernel_inf_norm()
    }
}

pub fn conv_forward(x: &TokenMap, k: &ConvKernelSet) -> Result<TokenMap> {
    conv_forward_counted(x, k, &mut OpCount::default())
}

pub fn conv_forward_counted(x: &TokenMap, k: &ConvKernelSet, ops: &mut OpCount) -> Result<TokenMap> {
    let (h, w, c_in) = x.shape();
    if c_in != k.c_in {
        return Err(Error::dims(format!("input has {c_in} channels, kernels expect {}", k.c_in)));
    }
    let c_out = k.c_out;
    let mut out = TokenMap::filled(h, w, c_out, k.bias);
    let src = x.data();
    let dst = out.data_mut();
    for i in 0..h {
        for j in 0..w {
            let o = &mut dst[(i * w + j) * c_out..(i * w + j + 1) * c_out];
            for m in 0..3 {
                let Some(si) = (i + m).checked_sub(1).filter(|&v| v < h) else { continue };
                for n in 0..3 {
                    let Some(sj) = (j + n).checked_sub(1).filter(|&v| v < w) else { continue };
                    let px = &src[(si * w + sj) * c_in..(si * w + sj + 1) * c_in];
                    for (l, acc) in o.iter_mut().enumerate() {
                        let kr = &k.kernels[((l * 3 + m) * 3 + n) * c_in..((l * 3 + m) * 3 + n + 1) * c_in];
                        for (a, b) in px.iter().zip(kr) {
                            *acc += a * b;
                        }
                    }
                }
            }
        }
    }
    let taps = in_range_taps(h) * in_range_taps(w) * c_in * c_out;
    ops.mul(taps);
    ops.add(taps);
    Ok(out)
}

/// Number of (output index, offset) pairs along one axis that land inside.
fn in_range_taps(len: usize) -> usize {
    3 * len - 2
}

/// Closed-form count for [`conv_forward_counted`].
pub fn conv_cost(h: usize, w: usize, c_in: usize, c_out: usize) -> OpCount {
    let n = (in_range_taps(h) * in_range_taps(w) * c_in * c_out) as u64;
    OpCount::new(n, n, 0)
}

/// `x + conv2(conv1(x))`, no activation.
#[derive(Debug, Clone, PartialEq)]
pub struct ResNetBlock {
    pub conv1: ConvKernelSet,
    pub conv2: ConvKernelSet,
}

impl ResNetBlock {
    pub fn new(conv1: ConvKernelSet, conv2: ConvKernelSet) -> Result<Self> {
        let d = conv1.c_in;
        if conv1.c_out != d || conv2.c_in != d || conv2.c_out != d {
            return Err(Error::dims("residual block convolutions must map d channels to d channels"));
        }
        Ok(Self { conv1, conv2 })
    }

    pub fn random(d: usize, r_bound: f64, rng: &mut Rng) -> Self {
        let conv1 = ConvKernelSet::random(d, d, r_bound, rng);
        let conv2 = ConvKernelSet::random(d, d, r_bound, rng);
        Self { conv1, conv2 }
    }

    pub fn channels(&self) -> usize {
        self.conv1.c_in
    }

    /// `1 + L1 L2` where `L_i` are the convolution Lipschitz constants.
    pub fn lipschitz(&self) -> f64 {
        1.0 + self.conv1.lipschitz() * self.conv2.lipschitz()
    }
}

pub fn resnet_forward(x: &TokenMap, block: &ResNetBlock) -> Result<TokenMap> {
    resnet_forward_counted(x, block, &mut OpCount::default())
}

pub fn resnet_forward_counted(x: &TokenMap, block: &ResNetBlock, ops: &mut OpCount) -> Result<TokenMap> {
    if x.channels() != block.channels() {
        return Err(Error::dims(format!(
            "input has {} channels, block expects {}",
            x.channels(),
            block.channels()
        )));
    }
    let y = conv_forward_counted(x, &block.conv1, ops)?;
    let y = conv_forward_counted(&y, &block.conv2, ops)?;
    x.add(&y, ops)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::inf_norm_diff;

    /// Six nested loops, written without any of the fast path's slicing.
    fn oracle(x: &TokenMap, k: &ConvKernelSet) -> TokenMap {
        let (h, w, c_in) = x.shape();
        TokenMap::from_fn(h, w, k.c_out(), |i, j, l| {
            let mut acc = k.bias();
            for m in 0..3 {
                for n in 0..3 {
                    for c in 0..c_in {
                        let si = i as isize + m as isize - 1;
                        let sj = j as isize + n as isize - 1;
                        if si >= 0 && sj >= 0 && (si as usize) < h && (sj as usize) < w {
                            acc += x.get(si as usize, sj as usize, c) * k.weight(l, m, n, c);
                        }
                    }
                }
            }
            acc
        })
    }

    #[test]
    fn ones_count_in_range_taps() {
        let x = TokenMap::filled(3, 3, 1, 1.0);
        let k = ConvKernelSet::new(1, 1, vec![1.0; 9], 0.0).unwrap();
        let y = conv_forward(&x, &k).unwrap();
        assert_eq!(y.get(1, 1, 0), 9.0);
        for (i, j) in [(0, 0), (0, 2), (2, 0), (2, 2)] {
            assert_eq!(y.get(i, j, 0), 4.0);
        }
        assert_eq!(y.get(0, 1, 0), 6.0);
    }

    #[test]
    fn zero_input_gives_bias() {
        let mut rng = Rng::new(1);
        let mut k = ConvKernelSet::random(2, 3, 0.5, &mut rng);
        k.bias = 0.5;
        let y = conv_forward(&TokenMap::zeros(4, 5, 2), &k).unwrap();
        assert_eq!(y.shape(), (4, 5, 3));
        assert!(y.data().iter().all(|&v| v == 0.5));
    }

    #[test]
    fn matches_loop_oracle() {
        let mut rng = Rng::new(2);
        let x = TokenMap::random(5, 5, 2, 1.0, &mut rng);
        let k = ConvKernelSet::random(2, 3, 0.5, &mut rng);
        let y = conv_forward(&x, &k).unwrap();
        assert!(inf_norm_diff(&y, &oracle(&x, &k)).unwrap() < 1e-14);
    }

    #[test]
    fn channel_mismatch() {
        let k = ConvKernelSet::zeros(3, 1, 0.0);
        assert!(matches!(conv_forward(&TokenMap::zeros(2, 2, 2), &k), Err(Error::DimensionMismatch(_))));
        assert!(ConvKernelSet::new(1, 1, vec![0.0; 8], 0.0).is_err());
    }

    #[test]
    fn counts_follow_closed_form() {
        let mut rng = Rng::new(3);
        for (h, w) in [(1, 1), (2, 3), (5, 4)] {
            let x = TokenMap::random(h, w, 2, 1.0, &mut rng);
            let k = ConvKernelSet::random(2, 3, 0.5, &mut rng);
            let mut ops = OpCount::default();
            conv_forward_counted(&x, &k, &mut ops).unwrap();
            let taps: usize = (0..h)
                .flat_map(|i| (0..w).map(move |j| (i, j)))
                .map(|(i, j)| {
                    let rows = (0..3).filter(|m| (i + m) >= 1 && i + m - 1 < h).count();
                    let cols = (0..3).filter(|n| (j + n) >= 1 && j + n - 1 < w).count();
                    rows * cols
                })
                .sum();
            assert_eq!(ops.mults as usize, taps * 6);
            assert_eq!(ops, conv_cost(h, w, 2, 3));
        }
    }

    #[test]
    fn random_init_respects_bound() {
        let mut rng = Rng::new(4);
        let k = ConvKernelSet::random(4, 4, 0.5, &mut rng);
        assert!(k.kernel_inf_norm() <= 0.5 / 6.0);
        assert!(k.bias().abs() <= 0.5 / 6.0);
    }

    #[test]
    fn residual_with_zero_kernels_is_identity() {
        let mut rng = Rng::new(5);
        let x = TokenMap::random(3, 4, 2, 1.0, &mut rng);
        let block = ResNetBlock::new(ConvKernelSet::zeros(2, 2, 0.0), ConvKernelSet::zeros(2, 2, 0.0)).unwrap();
        assert_eq!(resnet_forward(&x, &block).unwrap(), x);
    }

    #[test]
    fn residual_on_zero_input_propagates_biases() {
        let mut rng = Rng::new(6);
        let mut block = ResNetBlock::random(2, 0.5, &mut rng);
        block.conv1.bias = 0.3;
        block.conv2.bias = -0.2;
        let x = TokenMap::zeros(4, 4, 2);
        let y = resnet_forward(&x, &block).unwrap();
        let expected = oracle(&TokenMap::filled(4, 4, 2, 0.3), &block.conv2);
        assert!(inf_norm_diff(&y, &expected).unwrap() < 1e-15);
    }

    #[test]
    fn residual_matches_composed_oracle() {
        let mut rng = Rng::new(7);
        let x = TokenMap::random(4, 3, 3, 1.0, &mut rng);
        let block = ResNetBlock::random(3, 0.5, &mut rng);
        let inner = oracle(&oracle(&x, &block.conv1), &block.conv2);
        let expected = TokenMap::from_fn(4, 3, 3, |i, j, c| x.get(i, j, c) + inner.get(i, j, c));
        assert!(inf_norm_diff(&resnet_forward(&x, &block).unwrap(), &expected).unwrap() < 1e-14);
    }

    mod props {
        use super::*;
        use proptest::prelude::*;
        use crate::rng::Rng;

        proptest! {
            #![proptest_config(ProptestConfig::with_cases(128))]

            #[test]
            fn shape_and_lipschitz(seed in any::<u64>(), h in 1usize..6, w in 1usize..6, c in 1usize..4, eps in 1e-6f64..1.0) {
                let mut rng = Rng::new(seed);
                let k = ConvKernelSet::random(c, 2, 1.0, &mut rng);
                let x = TokenMap::random(h, w, c, 1.0, &mut rng);
                let noise = TokenMap::random(h, w, c, eps, &mut rng);
                let x2 = x.add(&noise, &mut OpCount::default()).unwrap();
                let y = conv_forward(&x, &k).unwrap();
                let y2 = conv_forward(&x2, &k).unwrap();
                prop_assert_eq!(y.shape(), (h, w, 2));
                let lhs = inf_norm_diff(&y, &y2).unwrap();
                let rhs = k.lipschitz() * inf_norm_diff(&x, &x2).unwrap();
                prop_assert!(lhs <= rhs * (1.0 + 1e-12) + 1e-15);
            }

            #[test]
            fn affine_in_input(seed in any::<u64>(), a in -2.0f64..2.0, b in -2.0f64..2.0) {
                let mut rng = Rng::new(seed);
                let k = ConvKernelSet::random(2, 2, 1.0, &mut rng);
                let x = TokenMap::random(4, 4, 2, 1.0, &mut rng);
                let x2 = TokenMap::random(4, 4, 2, 1.0, &mut rng);
                let mix = TokenMap::from_fn(4, 4, 2, |i, j, c| a * x.get(i, j, c) + b * x2.get(i, j, c));
                let lhs = conv_forward(&mix, &k).unwrap();
                let (y, y2) = (conv_forward(&x, &k).unwrap(), conv_forward(&x2, &k).unwrap());
                let rhs = TokenMap::from_fn(4, 4, 2, |i, j, c| {
                    a * y.get(i, j, c) + b * y2.get(i, j, c) + (1.0 - a - b) * k.bias()
                });
                prop_assert!(inf_norm_diff(&lhs, &rhs).unwrap() < 1e-10);
            }
        }
    }
}
