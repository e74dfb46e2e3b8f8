//! Exact Gaussian sampling through Cholesky factorization.
//!
//! This is the standard O(d^3)-time, O(d^2)-storage comparison method: factor
//! `V = A A^T` once, then each sample is `A Z` with `Z ~ N(0, I)`. It also
//! supplies the exact starting points for the coupled chain in
//! [`crate::estimators::estimate_mse`].

use crate::covariance::CovarianceModel;
use crate::error::{Error, Result};
use crate::estimators::TestFunctional;
use crate::rng::RngStream;
use crate::stats::OnlineStats;

/// Default pivot tolerance; correlation matrices are well scaled.
pub const DEFAULT_PIVOT_TOL: f64 = 1e-12;

/// Cap on dimensions the baseline will materialize and factor.
pub const FACTOR_CAP: usize = 8192;

/// Lower-triangular factor `A` with `A A^T = V`, stored as a packed
/// row-major lower triangle.
#[derive(Debug, Clone)]
pub struct CholeskyFactor {
    dim: usize,
    // row i occupies packed[i*(i+1)/2 .. i*(i+1)/2 + i + 1]
    packed: Vec<f64>,
}

impl CholeskyFactor {
    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Entry `A[i][j]`; zero above the diagonal.
    pub fn entry(&self, i: usize, j: usize) -> f64 {
        if j > i {
            0.0
        } else {
            self.packed[i * (i + 1) / 2 + j]
        }
    }

    fn row(&self, i: usize) -> &[f64] {
        &self.packed[i * (i + 1) / 2..i * (i + 1) / 2 + i + 1]
    }

    /// `A z` for a slice `z` of length d, written into `out`.
    pub fn multiply_into(&self, z: &[f64], out: &mut [f64]) {
        assert_eq!(z.len(), self.dim);
        assert_eq!(out.len(), self.dim);
        for (i, o) in out.iter_mut().enumerate() {
            let row = self.row(i);
            let mut acc = 0.0;
            for (a, zj) in row.iter().zip(z.iter()) {
                acc += a * zj;
            }
            *o = acc;
        }
    }
}

/// Plain (unpivoted) Cholesky factorization of the materialized model.
///
/// Fails with the offending pivot index as soon as a pivot drops below
/// `pivot_tol`, i.e. when the matrix is not positive definite within
/// tolerance. Runs in O(d^3).
pub fn cholesky(model: &CovarianceModel, pivot_tol: f64) -> Result<CholeskyFactor> {
    let d = model.dim();
    if d > FACTOR_CAP {
        return Err(Error::CapacityExceeded {
            dim: d,
            cap: FACTOR_CAP,
        });
    }
    // packed lower triangle of V
    let mut a = vec![0.0; d * (d + 1) / 2];
    let mut col = vec![0.0; d];
    for j in 0..d {
        model.column_into(j, &mut col)?;
        for i in j..d {
            a[i * (i + 1) / 2 + j] = col[i];
        }
    }
    // Cholesky-Banachiewicz, row by row over contiguous packed rows
    for i in 0..d {
        let (head, tail) = a.split_at_mut(i * (i + 1) / 2);
        let row_i = &mut tail[..i + 1];
        for j in 0..i {
            let row_j = &head[j * (j + 1) / 2..j * (j + 1) / 2 + j + 1];
            let mut s = row_i[j];
            for (lik, ljk) in row_i[..j].iter().zip(row_j.iter()) {
                s -= lik * ljk;
            }
            row_i[j] = s / row_j[j];
        }
        let mut s = row_i[i];
        for lik in row_i[..i].iter() {
            s -= lik * lik;
        }
        if s < pivot_tol {
            return Err(Error::Factorization { index: i, pivot: s });
        }
        row_i[i] = s.sqrt();
    }
    Ok(CholeskyFactor { dim: d, packed: a })
}

/// One exact draw `A Z ~ N(0, V)`.
pub fn sample_exact(factor: &CholeskyFactor, stream: &mut RngStream) -> Vec<f64> {
    let d = factor.dim();
    let mut z = vec![0.0; d];
    let mut out = vec![0.0; d];
    stream.fill_gaussian(&mut z);
    factor.multiply_into(&z, &mut out);
    out
}

/// Plain Monte Carlo estimate of `E h(X)` from `n_prime` exact samples.
#[derive(Debug, Clone)]
pub struct McEstimate {
    pub mean: f64,
    /// Sample standard deviation of h(X).
    pub stdev: f64,
    /// `stdev^2 / n_prime`, the variance of the returned mean.
    pub var_of_mean: f64,
    pub n_prime: u64,
}

pub fn mc_estimate(
    factor: &CholeskyFactor,
    h: &TestFunctional,
    n_prime: u64,
    stream: &mut RngStream,
) -> Result<McEstimate> {
    if n_prime < 2 {
        return Err(Error::InvalidArgument(format!(
            "n_prime must be at least 2, got {n_prime}"
        )));
    }
    let d = factor.dim();
    h.validate_dim(d)?;
    let mut z = vec![0.0; d];
    let mut x = vec![0.0; d];
    let mut acc = OnlineStats::new();
    for _ in 0..n_prime {
        stream.fill_gaussian(&mut z);
        factor.multiply_into(&z, &mut x);
        acc.push(h.evaluate(&x)?);
    }
    Ok(McEstimate {
        mean: acc.mean(),
        stdev: acc.stdev(),
        var_of_mean: acc.variance_of_mean(),
        n_prime,
    })
}
