//! Single-pass mean/variance accumulators (Welford update).

use nalgebra::{DMatrix, DVector};

/// Running mean and variance of a scalar sequence.
#[derive(Debug, Clone, Default)]
pub struct OnlineStats {
    count: u64,
    mean: f64,
    m2: f64,
}

impl OnlineStats {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(&mut self, value: f64) {
        self.count += 1;
        let delta = value - self.mean;
        self.mean += delta / self.count as f64;
        self.m2 += delta * (value - self.mean);
    }

    pub fn count(&self) -> u64 {
        self.count
    }

    pub fn mean(&self) -> f64 {
        self.mean
    }

    /// Unbiased sample variance; 0 until two values have been seen.
    pub fn variance(&self) -> f64 {
        if self.count > 1 {
            self.m2 / (self.count - 1) as f64
        } else {
            0.0
        }
    }

    pub fn stdev(&self) -> f64 {
        self.variance().sqrt()
    }

    /// Variance of the running mean, `variance() / count`.
    pub fn variance_of_mean(&self) -> f64 {
        if self.count > 0 {
            self.variance() / self.count as f64
        } else {
            0.0
        }
    }

    pub fn stderr_of_mean(&self) -> f64 {
        self.variance_of_mean().sqrt()
    }
}

/// Running mean vector and covariance matrix of a vector sequence.
///
/// Single pass, O(d^2) state; the covariance is the unbiased estimate
/// `M2 / (count - 1)`.
#[derive(Debug, Clone)]
pub struct CovarianceAccumulator {
    count: u64,
    mean: DVector<f64>,
    m2: DMatrix<f64>,
    delta: DVector<f64>,
}

impl CovarianceAccumulator {
    pub fn new(dim: usize) -> Self {
        Self {
            count: 0,
            mean: DVector::zeros(dim),
            m2: DMatrix::zeros(dim, dim),
            delta: DVector::zeros(dim),
        }
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn count(&self) -> u64 {
        self.count
    }

    pub fn push(&mut self, x: &[f64]) {
        assert_eq!(x.len(), self.mean.len(), "sample dimension mismatch");
        self.count += 1;
        let n = self.count as f64;
        for (k, &xk) in x.iter().enumerate() {
            self.delta[k] = xk - self.mean[k];
        }
        for (k, &xk) in x.iter().enumerate() {
            self.mean[k] += self.delta[k] / n;
            // ger-style rank-1 update with delta * (x - new_mean)^T
            let d2k = xk - self.mean[k];
            for l in 0..self.delta.len() {
                self.m2[(l, k)] += self.delta[l] * d2k;
            }
        }
    }

    pub fn mean(&self) -> &DVector<f64> {
        &self.mean
    }

    pub fn covariance(&self) -> DMatrix<f64> {
        assert!(self.count >= 2, "need at least two samples");
        let mut cov = self.m2.clone() / (self.count - 1) as f64;
        // the running update is not exactly symmetric in floating point
        for i in 0..cov.nrows() {
            for j in 0..i {
                let s = 0.5 * (cov[(i, j)] + cov[(j, i)]);
                cov[(i, j)] = s;
                cov[(j, i)] = s;
            }
        }
        cov
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn scalar_matches_two_pass() {
        let xs = [1.0, 4.0, -2.0, 0.5, 3.25, 7.0];
        let mut acc = OnlineStats::new();
        for &x in &xs {
            acc.push(x);
        }
        let mean = xs.iter().sum::<f64>() / xs.len() as f64;
        let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (xs.len() - 1) as f64;
        assert_relative_eq!(acc.mean(), mean, max_relative = 1e-14);
        assert_relative_eq!(acc.variance(), var, max_relative = 1e-14);
        assert_relative_eq!(acc.variance_of_mean(), var / 6.0, max_relative = 1e-14);
    }

    #[test]
    fn constant_scalar_has_zero_variance() {
        let mut acc = OnlineStats::new();
        for _ in 0..10 {
            acc.push(3.0);
        }
        assert_eq!(acc.mean(), 3.0);
        assert_eq!(acc.variance(), 0.0);
        assert_eq!(acc.stdev(), 0.0);
    }

    #[test]
    fn covariance_matches_two_pass() {
        let samples = [
            [1.0, 2.0, 0.0],
            [0.0, -1.0, 1.0],
            [2.0, 0.5, -0.5],
            [1.5, 1.0, 0.25],
            [-1.0, 0.0, 2.0],
        ];
        let d = 3;
        let mut acc = CovarianceAccumulator::new(d);
        for s in &samples {
            acc.push(s);
        }
        let n = samples.len() as f64;
        let mut mean = [0.0; 3];
        for s in &samples {
            for k in 0..d {
                mean[k] += s[k] / n;
            }
        }
        let cov = acc.covariance();
        for i in 0..d {
            for j in 0..d {
                let mut cij = 0.0;
                for s in &samples {
                    cij += (s[i] - mean[i]) * (s[j] - mean[j]);
                }
                cij /= n - 1.0;
                assert_relative_eq!(cov[(i, j)], cij, epsilon = 1e-13);
            }
        }
    }
}
