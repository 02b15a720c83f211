//! The subset distribution induced by the Shapley kernel: exact weights,
//! normalizing constant, a two-stage sampler, and the closed-form
//! second-moment matrix `A = E[ZZ^T]`.
//!
//! Interior coalitions (`0 < |z| < d`) are drawn with probability
//! proportional to the kernel weight; the empty and grand coalitions carry
//! infinite weight and are handled by the regression constraints instead.
//! The size marginal is `p(|z| = k) ∝ 1/(k(d-k))`, with a uniform subset
//! of that size drawn in a second stage.

use nalgebra::DMatrix;
use rand::Rng;

use crate::error::{Error, Result};
use crate::games::Coalition;

/// The kernel weight for a coalition of size `s` among `d` players:
/// `(d-1) / (C(d,s) * s * (d-s))`.
pub fn shapley_kernel_weight(d: usize, s: usize) -> Result<f64> {
    if d < 2 {
        return Err(Error::Config("kernel weights require at least 2 players".into()));
    }
    if s == 0 || s == d {
        return Err(Error::InfiniteKernelWeight);
    }
    if s > d {
        return Err(Error::Config(format!("coalition size {s} exceeds player count {d}")));
    }
    Ok((d as f64 - 1.0) / (binomial(d, s) * s as f64 * (d - s) as f64))
}

/// Binomial coefficient as `f64`, computed multiplicatively.
pub(crate) fn binomial(n: usize, k: usize) -> f64 {
    if k > n {
        return 0.0;
    }
    let k = k.min(n - k);
    let mut result = 1.0;
    for i in 0..k {
        result *= (n - i) as f64;
        result /= (i + 1) as f64;
    }
    result
}

/// The distribution `p(z)` over interior coalitions induced by the kernel.
#[derive(Debug, Clone)]
pub struct SubsetDistribution {
    d: usize,
    /// Normalized probability of each size `k = 1..d-1` (index `k-1`).
    size_weights: Vec<f64>,
    /// Cumulative sums of `size_weights` for inverse-CDF sampling.
    cumulative: Vec<f64>,
    /// Normalizing constant `Q = (d-1) * sum_k 1/(k(d-k))`.
    normalizer: f64,
}

impl SubsetDistribution {
    pub fn new(d: usize) -> Result<Self> {
        if d < 2 {
            return Err(Error::Config(
                "the subset distribution is defined for at least 2 players".into(),
            ));
        }
        let raw: Vec<f64> = (1..d).map(|k| 1.0 / (k as f64 * (d - k) as f64)).collect();
        let raw_sum: f64 = raw.iter().sum();
        let normalizer = (d as f64 - 1.0) * raw_sum;
        let size_weights: Vec<f64> = raw.iter().map(|w| w / raw_sum).collect();
        let mut cumulative = Vec::with_capacity(size_weights.len());
        let mut acc = 0.0;
        for w in &size_weights {
            acc += w;
            cumulative.push(acc);
        }
        // Guard the inverse CDF against accumulated rounding.
        if let Some(last) = cumulative.last_mut() {
            *last = 1.0;
        }
        Ok(SubsetDistribution { d, size_weights, cumulative, normalizer })
    }

    pub fn player_count(&self) -> usize {
        self.d
    }

    /// Probability of drawing a coalition of size `k` (zero outside `1..d-1`).
    pub fn size_probability(&self, k: usize) -> f64 {
        if k == 0 || k >= self.d {
            0.0
        } else {
            self.size_weights[k - 1]
        }
    }

    pub fn size_weights(&self) -> &[f64] {
        &self.size_weights
    }

    /// The kernel normalizing constant `Q`.
    pub fn normalizer(&self) -> f64 {
        self.normalizer
    }

    /// Probability of one specific coalition of size `k`:
    /// `size_probability(k) / C(d, k)`.
    pub fn coalition_probability(&self, k: usize) -> f64 {
        if k == 0 || k >= self.d {
            0.0
        } else {
            self.size_probability(k) / binomial(self.d, k)
        }
    }

    /// Draws a coalition: size by inverse CDF over the size marginal, then a
    /// uniform subset of that size by partial shuffle. Always interior.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Coalition {
        let r: f64 = rng.gen();
        let mut k = self.cumulative.len();
        for (idx, c) in self.cumulative.iter().enumerate() {
            if r < *c {
                k = idx + 1;
                break;
            }
        }
        if k > self.cumulative.len() {
            k = self.cumulative.len();
        }

        let mut indices: Vec<usize> = (0..self.d).collect();
        let mut bits = vec![false; self.d];
        for j in 0..k {
            let pick = j + rng.gen_range(0..self.d - j);
            indices.swap(j, pick);
            bits[indices[j]] = true;
        }
        Coalition::from_bits(bits)
    }
}

/// The exact second-moment matrix `A = E[ZZ^T]`: constant diagonal `1/2`
/// and a constant off-diagonal that depends only on `d`, stored as the
/// scalar pair. Its inverse has the closed form of a rank-one update of a
/// scaled identity, so applying `A^{-1}` costs `O(d)`.
#[derive(Debug, Clone, Copy)]
pub struct MomentMatrix {
    d: usize,
    diag: f64,
    offdiag: f64,
}

impl MomentMatrix {
    /// Computes the exact moment matrix in `O(d)` arithmetic.
    pub fn exact(d: usize) -> Result<Self> {
        if d < 2 {
            return Err(Error::Config("the moment matrix is defined for at least 2 players".into()));
        }
        let denominator: f64 = (1..d).map(|k| 1.0 / (k as f64 * (d - k) as f64)).sum();
        let numerator: f64 = (2..d).map(|k| (k as f64 - 1.0) / (d - k) as f64).sum();
        let offdiag = numerator / (d as f64 * (d as f64 - 1.0) * denominator);
        Ok(MomentMatrix { d, diag: 0.5, offdiag })
    }

    pub fn player_count(&self) -> usize {
        self.d
    }

    pub fn diag(&self) -> f64 {
        self.diag
    }

    pub fn offdiag(&self) -> f64 {
        self.offdiag
    }

    pub fn to_dense(&self) -> DMatrix<f64> {
        let mut m = DMatrix::from_element(self.d, self.d, self.offdiag);
        for i in 0..self.d {
            m[(i, i)] = self.diag;
        }
        m
    }

    /// `A = a I + c 11^T` with `a = diag - offdiag`, `c = offdiag`.
    pub(crate) fn identity_coefficient(&self) -> f64 {
        self.diag - self.offdiag
    }

    /// Applies `A^{-1}` to a vector using the rank-one-update closed form:
    /// `A^{-1} x = x/a - c (1^T x) / (a (a + d c)) 1`.
    pub fn inverse_apply(&self, x: &[f64]) -> Vec<f64> {
        debug_assert_eq!(x.len(), self.d);
        let a = self.identity_coefficient();
        let c = self.offdiag;
        let sum: f64 = x.iter().sum();
        let shift = c * sum / (a * (a + self.d as f64 * c));
        x.iter().map(|xi| xi / a - shift).collect()
    }

    /// `1^T A^{-1} 1 = d / (a + d c)`.
    pub fn ones_quadratic_inverse(&self) -> f64 {
        let a = self.identity_coefficient();
        let c = self.offdiag;
        self.d as f64 / (a + self.d as f64 * c)
    }
}

/// The empirical second moment `(1/n) sum_i z_i z_i^T` of a coalition sample.
pub fn empirical_a(samples: &[Coalition]) -> Result<DMatrix<f64>> {
    let first = samples
        .first()
        .ok_or_else(|| Error::Config("empirical moment needs at least one sample".into()))?;
    let d = first.player_count();
    let mut m = DMatrix::zeros(d, d);
    for z in samples {
        if z.player_count() != d {
            return Err(Error::Config("samples must share one player count".into()));
        }
        let ones: Vec<usize> = z.iter_ones().collect();
        for &i in &ones {
            for &j in &ones {
                m[(i, j)] += 1.0;
            }
        }
    }
    m /= samples.len() as f64;
    Ok(m)
}
