//! Test functionals and the two estimators of `m = E h(X)`, `X ~ N(0, V)`:
//! the running chain average `h_{n,b}` and the plain Monte Carlo baseline,
//! plus the coupled-chain estimate of `MSE(n; b)` and the closed-form bound
//! calculators.
//!
//! The coupled MSE procedure runs, per replication, two chains on identical
//! `(i_n, g_n)` draws: one from zero and one from an exact N(0, V) start.
//! The exact-start chain stays exactly N(0, V) at every step, so its running
//! average `h'_{n,b}` is unbiased for `m`, and
//!
//! ```text
//! MSE(n; b) = var(h_{n,b}) + (E(h_{n,b} - h'_{n,b}))^2
//! ```
//!
//! is estimated by the sample variance and the sample mean difference over
//! independent replications.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::baseline::{self, CholeskyFactor};
use crate::chain::{self, IndexSchedule};
use crate::covariance::CovarianceModel;
use crate::error::{Error, Result};
use crate::rng::{lanes, RngStream};
use crate::stats::OnlineStats;

/// Declared smoothness of a functional: `E((h(X) - h(X'))^2)` is at most
/// `kappa^2 (E ||X - X'||^2)^gamma` over centered Gaussian pairs with
/// covariances below the target.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Lipschitz {
    pub kappa: f64,
    /// Exponent in (0, 1].
    pub gamma: f64,
}

/// The concrete formula a [`TestFunctional`] applies.
#[derive(Debug, Clone, PartialEq)]
pub enum FunctionalKind {
    /// `scale * max(x_1, ..., x_d)`.
    Max { scale: f64 },
    /// Discounted basket-call payoff
    /// `(d^-1 sum_i exp(-vols_i^2 T / 2 + vols_i sqrt(T) x_i) - K e^{-rT})^+`.
    BasketCall {
        weights: Vec<f64>,
        vols: Vec<f64>,
        maturity: f64,
        strike: f64,
        rate: f64,
    },
    /// `1` if `x_i <= a_i` for every coordinate, else `0`.
    IndicatorBelow { threshold: Vec<f64> },
    /// `||x||`.
    EuclideanNorm,
    /// A fixed value, independent of `x`.
    Constant { value: f64 },
    /// `x[index]`.
    Coordinate { index: usize },
}

/// A real-valued function of the chain state with optional Lipschitz
/// metadata for the bound calculators.
#[derive(Debug, Clone, PartialEq)]
pub struct TestFunctional {
    kind: FunctionalKind,
    lipschitz: Option<Lipschitz>,
}

impl TestFunctional {
    /// `scale * max_i x_i`; `(scale, 1)`-Lipschitz.
    pub fn max(scale: f64) -> Self {
        Self {
            kind: FunctionalKind::Max { scale },
            lipschitz: Some(Lipschitz {
                kappa: scale.abs(),
                gamma: 1.0,
            }),
        }
    }

    /// Basket-call payoff. `weights` are the basket weights (the payoff
    /// divides by d only through them being 1/d in the standard setup; here
    /// the weights are explicit). Attaches the closed-form kappa computed
    /// from the discounted weights and maturity-scaled vols.
    pub fn basket_call(
        weights: Vec<f64>,
        vols: Vec<f64>,
        maturity: f64,
        strike: f64,
        rate: f64,
    ) -> Result<Self> {
        if weights.len() != vols.len() {
            return Err(Error::DimensionMismatch {
                expected: weights.len(),
                actual: vols.len(),
            });
        }
        if weights.iter().any(|w| *w < 0.0) {
            return Err(Error::InvalidArgument("weights must be non-negative".into()));
        }
        if !maturity.is_finite() || maturity <= 0.0 {
            return Err(Error::InvalidArgument("maturity must be positive".into()));
        }
        let sqrt_t = maturity.sqrt();
        // effective payoff: sum_i w_i' exp(sigma_i' x_i) - K' with
        // w_i' = w_i exp(-vols_i^2 T / 2), sigma_i' = vols_i sqrt(T)
        let eff_weights: Vec<f64> = weights
            .iter()
            .zip(&vols)
            .map(|(w, s)| w * (-s * s * maturity / 2.0).exp())
            .collect();
        let eff_vols: Vec<f64> = vols.iter().map(|s| s * sqrt_t).collect();
        let kappa = basket_kappa(&eff_weights, &eff_vols);
        Ok(Self {
            kind: FunctionalKind::BasketCall {
                weights,
                vols,
                maturity,
                strike,
                rate,
            },
            lipschitz: kappa.is_finite().then_some(Lipschitz { kappa, gamma: 1.0 }),
        })
    }

    /// Orthant indicator `1_{x <= a}`; `(3 (d / min|a_i|)^(1/3), 1/3)`-Lipschitz
    /// when no threshold is zero.
    pub fn indicator_below(threshold: Vec<f64>) -> Self {
        let d = threshold.len();
        let a_hat = threshold.iter().fold(f64::INFINITY, |m, a| m.min(a.abs()));
        let lipschitz = (a_hat > 0.0 && d > 0).then(|| Lipschitz {
            kappa: 3.0 * (d as f64 / a_hat).cbrt(),
            gamma: 1.0 / 3.0,
        });
        Self {
            kind: FunctionalKind::IndicatorBelow { threshold },
            lipschitz,
        }
    }

    /// `||x||`; 1-Lipschitz.
    pub fn norm() -> Self {
        Self {
            kind: FunctionalKind::EuclideanNorm,
            lipschitz: Some(Lipschitz {
                kappa: 1.0,
                gamma: 1.0,
            }),
        }
    }

    pub fn constant(value: f64) -> Self {
        Self {
            kind: FunctionalKind::Constant { value },
            lipschitz: Some(Lipschitz {
                kappa: 0.0,
                gamma: 1.0,
            }),
        }
    }

    /// Projection on one coordinate; 1-Lipschitz.
    pub fn coordinate(index: usize) -> Self {
        Self {
            kind: FunctionalKind::Coordinate { index },
            lipschitz: Some(Lipschitz {
                kappa: 1.0,
                gamma: 1.0,
            }),
        }
    }

    /// Overrides the attached Lipschitz metadata.
    pub fn with_lipschitz(mut self, kappa: f64, gamma: f64) -> Self {
        self.lipschitz = Some(Lipschitz { kappa, gamma });
        self
    }

    pub fn kind(&self) -> &FunctionalKind {
        &self.kind
    }

    pub fn lipschitz(&self) -> Option<Lipschitz> {
        self.lipschitz
    }

    /// Checks that the functional accepts vectors of length `d`.
    pub fn validate_dim(&self, d: usize) -> Result<()> {
        let expected = match &self.kind {
            FunctionalKind::BasketCall { weights, .. } => Some(weights.len()),
            FunctionalKind::IndicatorBelow { threshold } => Some(threshold.len()),
            FunctionalKind::Coordinate { index } => {
                if *index >= d {
                    return Err(Error::IndexOutOfRange { index: *index, dim: d });
                }
                None
            }
            _ => None,
        };
        match expected {
            Some(e) if e != d => Err(Error::DimensionMismatch {
                expected: e,
                actual: d,
            }),
            _ => {
                if d == 0 {
                    Err(Error::InvalidArgument("empty vector".into()))
                } else {
                    Ok(())
                }
            }
        }
    }

    pub fn evaluate(&self, x: &[f64]) -> Result<f64> {
        self.validate_dim(x.len())?;
        Ok(match &self.kind {
            FunctionalKind::Max { scale } => {
                scale * x.iter().cloned().fold(f64::NEG_INFINITY, f64::max)
            }
            FunctionalKind::BasketCall {
                weights,
                vols,
                maturity,
                strike,
                rate,
            } => {
                // log-sum-exp over the per-asset terms, so large
                // vols * sqrt(T) * x_i cannot overflow
                let sqrt_t = maturity.sqrt();
                let mut max_log = f64::NEG_INFINITY;
                for ((w, s), xi) in weights.iter().zip(vols).zip(x) {
                    if *w > 0.0 {
                        let log_term = w.ln() - s * s * maturity / 2.0 + s * sqrt_t * xi;
                        max_log = max_log.max(log_term);
                    }
                }
                let basket = if max_log == f64::NEG_INFINITY {
                    0.0
                } else {
                    let mut sum = 0.0;
                    for ((w, s), xi) in weights.iter().zip(vols).zip(x) {
                        if *w > 0.0 {
                            let log_term = w.ln() - s * s * maturity / 2.0 + s * sqrt_t * xi;
                            sum += (log_term - max_log).exp();
                        }
                    }
                    max_log.exp() * sum
                };
                (basket - strike * (-rate * maturity).exp()).max(0.0)
            }
            FunctionalKind::IndicatorBelow { threshold } => {
                if x.iter().zip(threshold).all(|(xi, ai)| xi <= ai) {
                    1.0
                } else {
                    0.0
                }
            }
            FunctionalKind::EuclideanNorm => x.iter().map(|v| v * v).sum::<f64>().sqrt(),
            FunctionalKind::Constant { value } => *value,
            FunctionalKind::Coordinate { index } => x[*index],
        })
    }
}

/// JSON-facing description of a functional.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum FunctionalDescriptor {
    Max {
        #[serde(default = "one")]
        scale: f64,
    },
    BasketCall {
        weights: Vec<f64>,
        vols: Vec<f64>,
        maturity: f64,
        strike: f64,
        rate: f64,
    },
    IndicatorBelow {
        threshold: Vec<f64>,
    },
    Norm,
    Const {
        value: f64,
    },
    Coordinate {
        index: usize,
    },
}

fn one() -> f64 {
    1.0
}

impl FunctionalDescriptor {
    pub fn build(&self) -> Result<TestFunctional> {
        match self {
            FunctionalDescriptor::Max { scale } => Ok(TestFunctional::max(*scale)),
            FunctionalDescriptor::BasketCall {
                weights,
                vols,
                maturity,
                strike,
                rate,
            } => TestFunctional::basket_call(
                weights.clone(),
                vols.clone(),
                *maturity,
                *strike,
                *rate,
            ),
            FunctionalDescriptor::IndicatorBelow { threshold } => {
                Ok(TestFunctional::indicator_below(threshold.clone()))
            }
            FunctionalDescriptor::Norm => Ok(TestFunctional::norm()),
            FunctionalDescriptor::Const { value } => Ok(TestFunctional::constant(*value)),
            FunctionalDescriptor::Coordinate { index } => Ok(TestFunctional::coordinate(*index)),
        }
    }
}

/// Result of one running-average estimation.
#[derive(Debug, Clone, Serialize)]
#[serde(rename_all = "camelCase")]
pub struct McmcEstimate {
    pub estimate: f64,
    pub n: u64,
    pub b: u64,
}

/// Runs the chain once from `X_0 = 0` and returns the streaming average of
/// `h(X_j)` over `b <= j < n`. Uses O(d) memory; the trajectory is never
/// stored.
///
/// States `X_b, ..., X_{n-1}` enter the average, so `n - 1` steps are taken.
pub fn mcmc_estimate(
    model: &CovarianceModel,
    h: &TestFunctional,
    n: u64,
    b: u64,
    schedule: &mut IndexSchedule,
    gaussians: &mut RngStream,
) -> Result<McmcEstimate> {
    if b >= n {
        return Err(Error::InvalidArgument(format!(
            "burn-in b = {b} must be smaller than n = {n}"
        )));
    }
    let d = model.dim();
    h.validate_dim(d)?;
    let mut acc = OnlineStats::new();
    let mut herr: Option<Error> = None;
    let state0 = vec![0.0; d];
    if b == 0 {
        acc.push(h.evaluate(&state0)?);
    }
    chain::run(model, schedule, gaussians, n - 1, state0, |rec, state| {
        let j = rec.n + 1; // state is X_j after j steps
        if j >= b && herr.is_none() {
            match h.evaluate(state.x()) {
                Ok(v) => acc.push(v),
                Err(e) => herr = Some(e),
            }
        }
    })?;
    if let Some(e) = herr {
        return Err(e);
    }
    debug_assert_eq!(acc.count(), n - b);
    Ok(McmcEstimate {
        estimate: acc.mean(),
        n,
        b,
    })
}

/// Convenience wrapper: uniform random schedule and Gaussian stream derived
/// from `(seed, replication)` on the standard lanes.
pub fn mcmc_estimate_seeded(
    model: &CovarianceModel,
    h: &TestFunctional,
    n: u64,
    b: u64,
    seed: u64,
    replication: u64,
) -> Result<McmcEstimate> {
    let d = model.dim();
    let mut schedule = IndexSchedule::uniform_random(
        d,
        RngStream::new(seed, lanes::id(lanes::INDEX, replication)),
    );
    let mut gaussians = RngStream::new(seed, lanes::id(lanes::GAUSSIAN, replication));
    mcmc_estimate(model, h, n, b, &mut schedule, &mut gaussians)
}

/// Output of the coupled-chain MSE estimation.
#[derive(Debug, Clone, Serialize)]
#[serde(rename_all = "camelCase")]
pub struct MseReport {
    pub n: u64,
    pub b: u64,
    pub replications: u32,
    /// Sample variance of `h_{n,b}` over replications.
    pub variance_term: f64,
    /// Sample mean of `h_{n,b} - h'_{n,b}` (the bias estimate).
    pub bias_term: f64,
    /// `variance_term + bias_term^2`.
    pub mse: f64,
    pub mcmc_mean: f64,
    pub exact_chain_mean: f64,
}

/// Estimates `MSE(n; b)` of the running average by the coupled-chain
/// procedure over `replications` independent replications.
///
/// One Cholesky factorization is shared across replications; replication
/// `r` derives its index, Gaussian, and exact-start streams from
/// `(seed, r)`. Replications run in parallel; the final reduction is in
/// fixed replication order, so the report is deterministic for a given
/// seed regardless of thread count.
pub fn estimate_mse(
    model: &CovarianceModel,
    h: &TestFunctional,
    n: u64,
    b: u64,
    replications: u32,
    seed: u64,
) -> Result<MseReport> {
    if replications < 2 {
        return Err(Error::InvalidArgument(format!(
            "need at least 2 replications, got {replications}"
        )));
    }
    if b >= n {
        return Err(Error::InvalidArgument(format!(
            "burn-in b = {b} must be smaller than n = {n}"
        )));
    }
    h.validate_dim(model.dim())?;
    let factor = baseline::cholesky(model, baseline::DEFAULT_PIVOT_TOL)?;
    let pairs: Vec<(f64, f64)> = (0..replications as u64)
        .into_par_iter()
        .map(|r| coupled_averages(model, &factor, h, n, b, seed, r))
        .collect::<Result<_>>()?;

    let mut chain_avg = OnlineStats::new();
    let mut exact_avg = OnlineStats::new();
    let mut diff = OnlineStats::new();
    for &(h_nb, h_nb_exact) in &pairs {
        chain_avg.push(h_nb);
        exact_avg.push(h_nb_exact);
        diff.push(h_nb - h_nb_exact);
    }
    let variance_term = chain_avg.variance();
    let bias_term = diff.mean();
    Ok(MseReport {
        n,
        b,
        replications,
        variance_term,
        bias_term,
        mse: variance_term + bias_term * bias_term,
        mcmc_mean: chain_avg.mean(),
        exact_chain_mean: exact_avg.mean(),
    })
}

/// One replication: returns `(h_{n,b}, h'_{n,b})` from the coupled pair.
fn coupled_averages(
    model: &CovarianceModel,
    factor: &CholeskyFactor,
    h: &TestFunctional,
    n: u64,
    b: u64,
    seed: u64,
    replication: u64,
) -> Result<(f64, f64)> {
    let d = model.dim();
    let mut start_stream = RngStream::new(seed, lanes::id(lanes::EXACT_START, replication));
    let mut gaussians = RngStream::new(seed, lanes::id(lanes::GAUSSIAN, replication));
    let mut schedule = IndexSchedule::uniform_random(
        d,
        RngStream::new(seed, lanes::id(lanes::INDEX, replication)),
    );
    let x0_exact = baseline::sample_exact(factor, &mut start_stream);

    let mut acc_a = OnlineStats::new();
    let mut acc_b = OnlineStats::new();
    let mut herr: Option<Error> = None;
    if b == 0 {
        acc_a.push(h.evaluate(&vec![0.0; d])?);
        acc_b.push(h.evaluate(&x0_exact)?);
    }
    chain::run_coupled(
        model,
        &mut schedule,
        &mut gaussians,
        n - 1,
        x0_exact,
        |rec, a, bstate| {
            let j = rec.n + 1;
            if j >= b && herr.is_none() {
                match (h.evaluate(a.x()), h.evaluate(bstate.x())) {
                    (Ok(va), Ok(vb)) => {
                        acc_a.push(va);
                        acc_b.push(vb);
                    }
                    (Err(e), _) | (_, Err(e)) => herr = Some(e),
                }
            }
        },
    )?;
    if let Some(e) = herr {
        return Err(e);
    }
    Ok((acc_a.mean(), acc_b.mean()))
}

/// Closed-form Lipschitz constant of the payoff
/// `max(sum_i w_i exp(vols_i x_i) - K, 0)`:
/// `sqrt(sum_i w_i^2 exp(2 vols_i^2) (4 vols_i^2 + 1))`.
///
/// With a maturity `T != 1` the caller passes the effective quantities
/// (weights discounted by `exp(-vols^2 T / 2)`, vols scaled by `sqrt(T)`).
pub fn basket_kappa(weights: &[f64], vols: &[f64]) -> f64 {
    assert_eq!(weights.len(), vols.len());
    weights
        .iter()
        .zip(vols)
        .map(|(w, s)| w * w * (2.0 * s * s).exp() * (4.0 * s * s + 1.0))
        .sum::<f64>()
        .sqrt()
}

/// Mean-square-error bound `18 kappa^2 d^2 / n` for a `(kappa, 1)`-Lipschitz
/// functional under uniform random indices, no burn-in.
pub fn mse_bound(kappa: f64, d: usize, n: u64) -> f64 {
    assert!(n >= 1);
    18.0 * kappa * kappa * (d as f64) * (d as f64) / n as f64
}

/// Wasserstein-2 bound `d / sqrt(n)` on the distance between the chain law
/// at step n and N(0, V), under uniform random indices.
pub fn wasserstein_bound(d: usize, n: u64) -> f64 {
    assert!(n >= 1);
    d as f64 / (n as f64).sqrt()
}

/// The constant `kappa' = 2 kappa d^(1+gamma) / (lambda gamma)` entering the
/// burn-in bias bound.
pub fn kappa_prime(kappa: f64, d: usize, gamma: f64, lambda: f64) -> Result<f64> {
    if !lambda.is_finite() || lambda <= 0.0 {
        return Err(Error::InvalidArgument(format!(
            "smallest eigenvalue must be positive, got {lambda}"
        )));
    }
    Ok(2.0 * kappa * (d as f64).powf(1.0 + gamma) / (lambda * gamma))
}

/// Bias bound `2 kappa' exp(-lambda gamma n / (4d)) / n` for the half-run
/// average (burn-in n/2), valid for even n and d >= 3 when V is positive
/// definite with smallest eigenvalue `lambda`.
pub fn burnin_bias_bound(kappa_prime: f64, lambda: f64, gamma: f64, n: u64, d: usize) -> Result<f64> {
    if !lambda.is_finite() || lambda <= 0.0 {
        return Err(Error::InvalidArgument(format!(
            "smallest eigenvalue must be positive, got {lambda}"
        )));
    }
    Ok(2.0 * kappa_prime * (-lambda * gamma * n as f64 / (4.0 * d as f64)).exp() / n as f64)
}
