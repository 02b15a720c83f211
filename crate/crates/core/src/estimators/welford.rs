//! Streaming mean and covariance of vector samples (Welford's algorithm).

use nalgebra::{DMatrix, DVector};

/// Running mean and sum of outer products of deviations for a stream of
/// vectors. The update uses one pre-mean and one post-mean deviation, so the
/// accumulated matrix is exactly `sum_i (x_i - mean)(x_i - mean)^T`.
#[derive(Debug, Clone)]
pub(crate) struct VectorWelford {
    count: u64,
    mean: DVector<f64>,
    ssq: DMatrix<f64>,
    diff_pre: DVector<f64>,
    diff_post: DVector<f64>,
}

impl VectorWelford {
    pub fn new(d: usize) -> Self {
        VectorWelford {
            count: 0,
            mean: DVector::zeros(d),
            ssq: DMatrix::zeros(d, d),
            diff_pre: DVector::zeros(d),
            diff_post: DVector::zeros(d),
        }
    }

    pub fn update(&mut self, sample: &DVector<f64>) {
        self.count += 1;
        self.diff_pre.copy_from(sample);
        self.diff_pre -= &self.mean;
        self.mean.axpy(1.0 / self.count as f64, &self.diff_pre, 1.0);
        self.diff_post.copy_from(sample);
        self.diff_post -= &self.mean;
        self.ssq.ger(1.0, &self.diff_pre, &self.diff_post, 1.0);
    }

    pub fn count(&self) -> u64 {
        self.count
    }

    pub fn mean(&self) -> &DVector<f64> {
        &self.mean
    }

    /// `ssq / n`: the population covariance. Zero matrix before two samples.
    pub fn population_covariance(&self) -> DMatrix<f64> {
        if self.count == 0 {
            return self.ssq.clone();
        }
        &self.ssq / self.count as f64
    }

    /// `ssq / (n - 1)`: the unbiased sample covariance; needs two samples.
    pub fn sample_covariance(&self) -> Option<DMatrix<f64>> {
        if self.count < 2 {
            return None;
        }
        Some(&self.ssq / (self.count - 1) as f64)
    }
}
