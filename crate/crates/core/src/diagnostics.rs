//! Desk-scale exact oracles and certifications.
//!
//! The central object is the averaged projection operator
//!
//! ```text
//! T(W) = (1/d) sum_i P_i W P_i,    P_i = I - f_i f_i^T,   f_i = sqrt(V) e_i,
//! ```
//!
//! whose iterates give the chain's expected covariance deficit exactly:
//! `tr(T^n(V)) = E ||M_n||^2 = tr(V - cov(X_n))` under i.i.d. uniform
//! indices, where `M_n` is the random product of projections accumulated by
//! n steps. Computing the sequence needs dense d x d matrices, so these
//! oracles are capped at small dimensions; they exist to certify the chain
//! and its bounds numerically, not to run at sampling scale.

use nalgebra::DMatrix;
use serde::Serialize;

use crate::error::{Error, Result};

/// Cap on dimensions the dense oracles will touch.
pub const DIAGNOSTICS_CAP: usize = 64;

/// Cap on the length of the operator-trace sequence.
pub const TRACE_LEN_CAP: usize = 10_000;

/// Eigenvalues in `[-CLAMP_TOL, 0)` are treated as zero; anything lower is
/// an error.
pub const CLAMP_TOL: f64 = 1e-10;

/// Symmetric square root `s` with `s * s = V`.
#[derive(Debug, Clone)]
pub struct SqrtFactor {
    s: DMatrix<f64>,
}

impl SqrtFactor {
    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.s
    }

    pub fn dim(&self) -> usize {
        self.s.nrows()
    }
}

/// Symmetric PSD square root via eigendecomposition, clamping eigenvalues
/// in `[-CLAMP_TOL, 0)` to zero.
pub fn matrix_sqrt(v: &DMatrix<f64>) -> Result<SqrtFactor> {
    let d = check_square(v)?;
    if d > DIAGNOSTICS_CAP {
        return Err(Error::CapacityExceeded {
            dim: d,
            cap: DIAGNOSTICS_CAP,
        });
    }
    let sym = symmetrize(v);
    let eigen = sym.symmetric_eigen();
    let mut vals = eigen.eigenvalues.clone();
    for lambda in vals.iter_mut() {
        if *lambda < -CLAMP_TOL {
            return Err(Error::NotPositiveSemiDefinite { eigenvalue: *lambda });
        }
        *lambda = lambda.max(0.0).sqrt();
    }
    let q = eigen.eigenvectors;
    let s = &q * DMatrix::from_diagonal(&vals) * q.transpose();
    Ok(SqrtFactor { s: symmetrize(&s) })
}

/// The sequence `values[j] = tr(T^j(V)) = E ||M_j||^2`.
#[derive(Debug, Clone, Serialize)]
pub struct OperatorTrace {
    values: Vec<f64>,
}

impl OperatorTrace {
    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

/// Iterates the averaged projection operator and records the traces
/// `values[0..=n_max]`, with `values[0] = tr(V) = d`.
///
/// Uses the closed form
/// `T(W) = W - (VW + WV)/d + sqrt(V) diag(sqrt(V) W sqrt(V)) sqrt(V) / d`,
/// a few dense multiplications per iterate.
pub fn expected_m_norms(v: &DMatrix<f64>, n_max: usize) -> Result<OperatorTrace> {
    let d = check_square(v)?;
    if d > DIAGNOSTICS_CAP {
        return Err(Error::CapacityExceeded {
            dim: d,
            cap: DIAGNOSTICS_CAP,
        });
    }
    if n_max > TRACE_LEN_CAP {
        return Err(Error::CapacityExceeded {
            dim: n_max,
            cap: TRACE_LEN_CAP,
        });
    }
    let sqrt = matrix_sqrt(v)?;
    let s = sqrt.matrix();
    let df = d as f64;
    let mut w = symmetrize(v);
    let mut values = Vec::with_capacity(n_max + 1);
    values.push(w.trace());
    for _ in 0..n_max {
        let a = s * &w * s;
        // sqrt(V) diag(a) sqrt(V): scale the columns of s by diag(a), then
        // multiply by s again
        let mut s_scaled = s.clone();
        for k in 0..d {
            let c = a[(k, k)];
            for r in 0..d {
                s_scaled[(r, k)] *= c;
            }
        }
        let correction = &s_scaled * s;
        let vw = v * &w;
        let mut next = w.clone();
        for i in 0..d {
            for j in 0..d {
                next[(i, j)] -= (vw[(i, j)] + vw[(j, i)] - correction[(i, j)]) / df;
            }
        }
        w = symmetrize(&next);
        values.push(w.trace());
    }
    Ok(OperatorTrace { values })
}

/// Unbiased single-pass sample covariance of a stream of vectors.
pub fn empirical_covariance<I, S>(samples: I) -> Result<DMatrix<f64>>
where
    I: IntoIterator<Item = S>,
    S: AsRef<[f64]>,
{
    let mut iter = samples.into_iter();
    let first = iter
        .next()
        .ok_or_else(|| Error::InvalidArgument("need at least 2 samples".into()))?;
    let mut acc = crate::stats::CovarianceAccumulator::new(first.as_ref().len());
    acc.push(first.as_ref());
    for s in iter {
        acc.push(s.as_ref());
    }
    if acc.count() < 2 {
        return Err(Error::InvalidArgument("need at least 2 samples".into()));
    }
    Ok(acc.covariance())
}

/// Exact quadratic Wasserstein distance between centered Gaussians with
/// covariances `cov_a` and `cov_b`:
/// `W2^2 = tr(A) + tr(B) - 2 tr((sqrt(A) B sqrt(A))^(1/2))`.
pub fn gaussian_w2(cov_a: &DMatrix<f64>, cov_b: &DMatrix<f64>) -> Result<f64> {
    let da = check_square(cov_a)?;
    let db = check_square(cov_b)?;
    if da != db {
        return Err(Error::DimensionMismatch {
            expected: da,
            actual: db,
        });
    }
    let sa = matrix_sqrt(cov_a)?;
    // PSD check on B as well
    let _ = matrix_sqrt(cov_b)?;
    let middle = sa.matrix() * cov_b * sa.matrix();
    let eigen = symmetrize(&middle).symmetric_eigen();
    let mut cross = 0.0;
    for &lambda in eigen.eigenvalues.iter() {
        if lambda < -CLAMP_TOL {
            return Err(Error::NotPositiveSemiDefinite { eigenvalue: lambda });
        }
        cross += lambda.max(0.0).sqrt();
    }
    let w2sq = cov_a.trace() + cov_b.trace() - 2.0 * cross;
    Ok(w2sq.max(0.0).sqrt())
}

/// Worst-case slack of the closed-form inequality
/// `E((e^X - e^X')^2) <= (nu + nu' + 1/2)(e^{2 nu} + e^{2 nu'}) E((X - X')^2)`
/// over a grid of jointly Gaussian scalar pairs, where `X ~ N(0, nu)`,
/// `X' ~ N(0, nu')` and `cov = cov(X, X')`.
#[derive(Debug, Clone, Serialize)]
#[serde(rename_all = "camelCase")]
pub struct ExpLipschitzReport {
    pub min_slack: f64,
    pub worst_point: (f64, f64, f64),
    pub points_checked: usize,
}

/// Evaluates both sides in closed form on each `(nu, nu', cov)` triple and
/// reports the minimum of RHS - LHS. Points must satisfy
/// `0 <= nu' <= nu` and `|cov| <= sqrt(nu nu')`.
pub fn certify_exp_lipschitz(points: &[(f64, f64, f64)]) -> Result<ExpLipschitzReport> {
    if points.is_empty() {
        return Err(Error::InvalidArgument("empty grid".into()));
    }
    let mut min_slack = f64::INFINITY;
    let mut worst = points[0];
    for &(nu, nu_p, cov) in points {
        if !(0.0 <= nu_p && nu_p <= nu) {
            return Err(Error::InvalidArgument(format!(
                "need 0 <= nu' <= nu, got nu = {nu}, nu' = {nu_p}"
            )));
        }
        let cmax = (nu * nu_p).sqrt();
        if cov.abs() > cmax {
            return Err(Error::InvalidArgument(format!(
                "|cov| = {} exceeds sqrt(nu nu') = {cmax}",
                cov.abs()
            )));
        }
        // E((e^X - e^X')^2) = e^{2nu} + e^{2nu'} - 2 e^{nu/2 + nu'/2 + cov}
        let lhs = (2.0 * nu).exp() + (2.0 * nu_p).exp()
            - 2.0 * (0.5 * nu + 0.5 * nu_p + cov).exp();
        // E((X - X')^2) = nu + nu' - 2 cov
        let rho = nu + nu_p - 2.0 * cov;
        let rhs = (nu + nu_p + 0.5) * ((2.0 * nu).exp() + (2.0 * nu_p).exp()) * rho;
        let slack = rhs - lhs;
        if slack < min_slack {
            min_slack = slack;
            worst = (nu, nu_p, cov);
        }
    }
    Ok(ExpLipschitzReport {
        min_slack,
        worst_point: worst,
        points_checked: points.len(),
    })
}

/// The standard certification grid: `nu, nu' in [0, max_nu]` with the given
/// step (`nu' <= nu`), and for each pair `cov_steps + 1` evenly spaced
/// covariances spanning `[-sqrt(nu nu'), +sqrt(nu nu')]` with exact
/// endpoints.
pub fn exp_lipschitz_grid(max_nu: f64, step: f64, cov_steps: usize) -> Vec<(f64, f64, f64)> {
    assert!(max_nu > 0.0 && step > 0.0 && cov_steps >= 2 && cov_steps.is_multiple_of(2));
    let count = (max_nu / step).round() as usize;
    let mut points = Vec::new();
    let half = (cov_steps / 2) as f64;
    for a in 0..=count {
        let nu = a as f64 * step;
        for b in 0..=a {
            let nu_p = b as f64 * step;
            let cmax = (nu * nu_p).sqrt();
            for k in 0..=cov_steps {
                // k/half - 1 hits -1, 0, +1 exactly, so the admissible
                // endpoints are included without rounding slop
                let cov = cmax * (k as f64 / half - 1.0);
                points.push((nu, nu_p, cov));
                if cmax == 0.0 {
                    break;
                }
            }
        }
    }
    points
}

fn check_square(m: &DMatrix<f64>) -> Result<usize> {
    if !m.is_square() {
        return Err(Error::InvalidArgument("matrix is not square".into()));
    }
    if m.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("matrix entry".into()));
    }
    Ok(m.nrows())
}

fn symmetrize(m: &DMatrix<f64>) -> DMatrix<f64> {
    0.5 * (m + m.transpose())
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn dmat(d: usize, rows: &[f64]) -> DMatrix<f64> {
        DMatrix::from_row_slice(d, d, rows)
    }

    #[test]
    fn sqrt_of_identity() {
        let v = DMatrix::identity(4, 4);
        let s = matrix_sqrt(&v).unwrap();
        assert_relative_eq!((s.matrix() - v).norm(), 0.0, epsilon = 1e-13);
    }

    #[test]
    fn sqrt_reconstructs_two_by_two() {
        let v = dmat(2, &[1.0, 0.5, 0.5, 1.0]);
        let s = matrix_sqrt(&v).unwrap();
        let back = s.matrix() * s.matrix();
        assert_relative_eq!((back - &v).norm(), 0.0, epsilon = 1e-12);
        // eigenvalues of V are 1.5 and 0.5
        let eigen = v.symmetric_eigen();
        let mut ev: Vec<f64> = eigen.eigenvalues.iter().cloned().collect();
        ev.sort_by(|a, b| a.partial_cmp(b).unwrap());
        assert_relative_eq!(ev[0], 0.5, epsilon = 1e-12);
        assert_relative_eq!(ev[1], 1.5, epsilon = 1e-12);
    }

    #[test]
    fn sqrt_clamps_tiny_negative_eigenvalue() {
        // eigenvalues 2 + 5e-13 and -5e-13
        let eps = 5e-13;
        let v = dmat(2, &[1.0, 1.0 + eps, 1.0 + eps, 1.0]);
        let s = matrix_sqrt(&v).unwrap();
        let back = s.matrix() * s.matrix();
        assert!((back - &v).norm() < 1e-10);
    }

    #[test]
    fn sqrt_rejects_indefinite() {
        let v = dmat(2, &[1.0, 2.0, 2.0, 1.0]);
        assert!(matches!(
            matrix_sqrt(&v),
            Err(Error::NotPositiveSemiDefinite { .. })
        ));
    }

    #[test]
    fn operator_trace_identity_closed_form() {
        // V = I: values[j] = d (1 - 1/d)^j
        let d = 8;
        let v = DMatrix::identity(d, d);
        let trace = expected_m_norms(&v, 40).unwrap();
        for (j, &val) in trace.values().iter().enumerate() {
            let expected = d as f64 * (1.0 - 1.0 / d as f64).powi(j as i32);
            assert_relative_eq!(val, expected, max_relative = 1e-12);
        }
    }

    #[test]
    fn operator_trace_starts_at_dimension() {
        let v = dmat(2, &[1.0, 0.3, 0.3, 1.0]);
        let trace = expected_m_norms(&v, 5).unwrap();
        assert_relative_eq!(trace.values()[0], 2.0, epsilon = 1e-14);
    }

    #[test]
    fn operator_trace_caps() {
        let v = DMatrix::identity(65, 65);
        assert!(matches!(
            expected_m_norms(&v, 5),
            Err(Error::CapacityExceeded { .. })
        ));
        let v = DMatrix::identity(4, 4);
        assert!(expected_m_norms(&v, TRACE_LEN_CAP + 1).is_err());
    }

    #[test]
    fn empirical_covariance_of_constant_samples_is_zero() {
        let samples = vec![vec![1.0, -2.0, 0.5]; 10];
        let cov = empirical_covariance(samples).unwrap();
        assert_relative_eq!(cov.norm(), 0.0, epsilon = 1e-14);
    }

    #[test]
    fn empirical_covariance_needs_two_samples() {
        assert!(empirical_covariance(vec![vec![1.0, 2.0]]).is_err());
        assert!(empirical_covariance(Vec::<Vec<f64>>::new()).is_err());
    }

    #[test]
    fn w2_of_equal_covariances_is_zero() {
        // cancellation noise in W2^2 (~1e-14) passes through the final
        // square root, so "zero" means ~1e-7 here
        let v = dmat(2, &[1.0, 0.4, 0.4, 1.0]);
        assert_relative_eq!(gaussian_w2(&v, &v).unwrap(), 0.0, epsilon = 1e-6);
    }

    #[test]
    fn w2_scalar_case() {
        let a = dmat(1, &[1.0]);
        let b = dmat(1, &[4.0]);
        assert_relative_eq!(gaussian_w2(&a, &b).unwrap(), 1.0, epsilon = 1e-12);
    }

    #[test]
    fn w2_scaling_identity() {
        // W2(V, (1-eps) V) = (1 - sqrt(1-eps)) sqrt(d) for correlation V
        let d = 6;
        let v = {
            let mut m = DMatrix::identity(d, d);
            for i in 0..d {
                for j in 0..d {
                    if i != j {
                        m[(i, j)] = 0.3 / (1.0 + (i as f64 - j as f64).abs());
                    }
                }
            }
            m
        };
        for eps in [0.1, 0.5] {
            let scaled = &v * (1.0 - eps);
            let w2 = gaussian_w2(&v, &scaled).unwrap();
            let expected = (1.0 - (1.0 - eps).sqrt()) * (d as f64).sqrt();
            assert_relative_eq!(w2, expected, epsilon = 1e-9);
        }
    }

    #[test]
    fn exp_lipschitz_trivial_points() {
        // X = X' (nu = nu' = cov): LHS = 0, slack = RHS = 0
        let report = certify_exp_lipschitz(&[(1.0, 1.0, 1.0)]).unwrap();
        assert_eq!(report.min_slack, 0.0);
        // nu = nu' = 1, cov = 0: LHS = 2e^2 - 2e, RHS = (5/2)(2e^2)(2)
        let report = certify_exp_lipschitz(&[(1.0, 1.0, 0.0)]).unwrap();
        let e = std::f64::consts::E;
        let lhs = 2.0 * e * e - 2.0 * e;
        let rhs = 2.5 * (2.0 * e * e) * 2.0;
        assert_relative_eq!(report.min_slack, rhs - lhs, epsilon = 1e-12);
    }

    #[test]
    fn exp_lipschitz_rejects_invalid_cov() {
        assert!(certify_exp_lipschitz(&[(1.0, 1.0, 1.5)]).is_err());
        assert!(certify_exp_lipschitz(&[(0.5, 1.0, 0.0)]).is_err());
    }

    #[test]
    fn grid_contains_exact_endpoints() {
        let grid = exp_lipschitz_grid(1.0, 0.5, 4);
        // for nu = 1, nu' = 0.5 the extreme covariances are +-sqrt(0.5)
        let cmax = (0.5f64).sqrt();
        assert!(grid
            .iter()
            .any(|&(a, b, c)| a == 1.0 && b == 0.5 && c == cmax));
        assert!(grid
            .iter()
            .any(|&(a, b, c)| a == 1.0 && b == 0.5 && c == -cmax));
        // nu' = 0 rows collapse to a single admissible covariance
        assert_eq!(
            grid.iter().filter(|&&(a, b, _)| a == 1.0 && b == 0.0).count(),
            1
        );
    }

    proptest! {
        #[test]
        fn w2_is_a_metric_on_random_psd(
            seed in 0u64..500,
            d in 1usize..6,
        ) {
            let mut stream = crate::rng::RngStream::new(seed, 0);
            let mut psd = || {
                let g = DMatrix::from_fn(d, d, |_, _| stream.next_gaussian());
                &g * g.transpose() + DMatrix::identity(d, d) * 0.1
            };
            let a = psd();
            let b = psd();
            let c = psd();
            let dab = gaussian_w2(&a, &b).unwrap();
            let dba = gaussian_w2(&b, &a).unwrap();
            let dac = gaussian_w2(&a, &c).unwrap();
            let dcb = gaussian_w2(&c, &b).unwrap();
            // symmetry, nonnegativity, identity, triangle inequality
            prop_assert!((dab - dba).abs() <= 1e-9);
            prop_assert!(dab >= 0.0);
            prop_assert!(gaussian_w2(&a, &a).unwrap() <= 1e-6);
            prop_assert!(dab <= dac + dcb + 1e-8);
        }
    }
}
