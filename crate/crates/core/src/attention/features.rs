//! Polynomial feature maps whose inner products are truncated exponentials.
//!
//! Features are indexed by multisets `m` over `[d]` with `|m| <= g`. The
//! feature for `m` is `q^m / sqrt(prod_i m_i!)`, which makes
//!
//! ```text
//! <phi(q), phi(k)> = sum_{t=0..g} sum_{|m|=t} (q.k)^m / prod m_i!
//!                  = sum_{t=0..g} <q,k>^t / t!
//! ```
//!
//! by the multinomial theorem. There are `C(d+g, g)` such multisets.

use crate::counter::OpCount;
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct PolyFeatureMap {
    degree: usize,
    dim: usize,
    /// Each multiset as a non-decreasing index list, grouped by size.
    index_set: Vec<Vec<usize>>,
    coefficients: Vec<f64>,
    /// `(parent feature, variable)` such that `m = parent + {variable}`.
    parents: Vec<(usize, usize)>,
}

impl PolyFeatureMap {
    pub fn new(dim: usize, degree: usize) -> Result<Self> {
        if dim == 0 {
            return Err(Error::dims("feature map needs dimension >= 1"));
        }
        let mut index_set: Vec<Vec<usize>> = vec![Vec::new()];
        let mut coefficients = vec![1.0];
        let mut parents = vec![(0, 0)];
        let mut frontier: Vec<usize> = vec![0];
        for _ in 0..degree {
            let mut next = Vec::new();
            for &p in &frontier {
                let start = index_set[p].last().copied().unwrap_or(0);
                for var in start..dim {
                    let mut m = index_set[p].clone();
                    m.push(var);
                    let id = index_set.len();
                    coefficients.push(1.0 / multiplicity_factorial(&m).sqrt());
                    index_set.push(m);
                    parents.push((p, var));
                    next.push(id);
                }
            }
            frontier = next;
        }
        Ok(Self { degree, dim, index_set, coefficients, parents })
    }

    pub fn degree(&self) -> usize {
        self.degree
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Number of features, `C(dim + degree, degree)`.
    pub fn len(&self) -> usize {
        self.index_set.len()
    }

    pub fn is_empty(&self) -> bool {
        self.index_set.is_empty()
    }

    pub fn index_set(&self) -> &[Vec<usize>] {
        &self.index_set
    }

    pub fn coefficients(&self) -> &[f64] {
        &self.coefficients
    }

    /// Writes the features of `q` into `out` (length [`Self::len`]).
    pub(crate) fn fill(&self, q: &[f64], raw: &mut [f64], out: &mut [f64]) {
        raw[0] = 1.0;
        out[0] = 1.0;
        for f in 1..self.parents.len() {
            let (p, var) = self.parents[f];
            raw[f] = raw[p] * q[var];
            out[f] = raw[f] * self.coefficients[f];
        }
    }

    /// Multiplications per feature vector.
    pub fn cost_per_vector(&self) -> usize {
        2 * (self.len() - 1)
    }
}

fn multiplicity_factorial(m: &[usize]) -> f64 {
    let mut prod = 1.0;
    let mut run = 1.0;
    for w in m.windows(2) {
        if w[0] == w[1] {
            run += 1.0;
            prod *= run;
        } else {
            run = 1.0;
        }
    }
    prod
}

/// Feature vector of `q`.
pub fn feature_map(q: &[f64], fm: &PolyFeatureMap) -> Result<Vec<f64>> {
    feature_map_counted(q, fm, &mut OpCount::default())
}

pub fn feature_map_counted(q: &[f64], fm: &PolyFeatureMap, ops: &mut OpCount) -> Result<Vec<f64>> {
    if q.len() != fm.dim() {
        return Err(Error::dims(format!(
            "vector of length {} for a {}-dimensional feature map",
            q.len(),
            fm.dim()
        )));
    }
    let mut raw = vec![0.0; fm.len()];
    let mut out = vec![0.0; fm.len()];
    fm.fill(q, &mut raw, &mut out);
    ops.mul(fm.cost_per_vector());
    Ok(out)
}

/// Binomial coefficient as u64, exact for the sizes used here.
pub fn binomial(n: usize, k: usize) -> u64 {
    let k = k.min(n - k);
    let mut acc: u64 = 1;
    for i in 0..k {
        acc = acc * (n - i) as u64 / (i + 1) as u64;
    }
    acc
}
