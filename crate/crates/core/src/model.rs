//! Black-box model interface and the concrete models.
//!
//! Observation indices are zero-based throughout the crate.

use std::f64::consts::PI;
use std::fmt;

use serde::{Deserialize, Serialize};
use statrs::function::gamma::ln_gamma;

use crate::data::Dataset;
use crate::error::{CoresetError, Result};
use crate::numeric::NeumaierSum;

const HALF_LN_2PI: f64 = 0.918_938_533_204_672_8;

/// A model known only through its log-prior and per-datum log-likelihoods.
///
/// `log_prior` and `log_lik` skip argument validation; the `try_` variants
/// check indices and dimensions.
pub trait Model: Send + Sync {
    fn dim(&self) -> usize;
    fn num_observations(&self) -> usize;
    fn log_prior(&self, theta: &[f64]) -> f64;
    fn log_lik(&self, n: usize, theta: &[f64]) -> f64;

    /// Access to the closed-form Gaussian location model, when this is one.
    fn as_gaussian_location(&self) -> Option<&GaussianLocation> {
        None
    }

    fn try_log_lik(&self, n: usize, theta: &[f64]) -> Result<f64> {
        if n >= self.num_observations() {
            return Err(CoresetError::IndexOutOfRange { index: n, len: self.num_observations() });
        }
        check_dim(self.dim(), theta)?;
        Ok(self.log_lik(n, theta))
    }

    fn try_log_prior(&self, theta: &[f64]) -> Result<f64> {
        check_dim(self.dim(), theta)?;
        Ok(self.log_prior(theta))
    }
}

pub(crate) fn check_dim(expected: usize, theta: &[f64]) -> Result<()> {
    if theta.len() != expected {
        return Err(CoresetError::DimensionMismatch { expected, actual: theta.len() });
    }
    Ok(())
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelKind {
    GaussianLocation,
    LinearRegression,
    LogisticRegression,
    PoissonRegression,
}

impl ModelKind {
    /// Parameter dimension for `p` features.
    pub fn parameter_dim(self, p: usize) -> usize {
        match self {
            ModelKind::GaussianLocation => p,
            ModelKind::LinearRegression => p + 2,
            ModelKind::LogisticRegression | ModelKind::PoissonRegression => p + 1,
        }
    }
}

impl fmt::Display for ModelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            ModelKind::GaussianLocation => "gaussian_location",
            ModelKind::LinearRegression => "linear_regression",
            ModelKind::LogisticRegression => "logistic_regression",
            ModelKind::PoissonRegression => "poisson_regression",
        };
        f.write_str(s)
    }
}

/// log(1 + e^x) without overflow.
#[inline]
pub fn softplus(x: f64) -> f64 {
    if x > 0.0 {
        x + (-x).exp().ln_1p()
    } else {
        x.exp().ln_1p()
    }
}

#[inline]
fn linear_predictor(x: &[f64], beta: &[f64]) -> f64 {
    beta[0] + x.iter().zip(&beta[1..]).map(|(a, b)| a * b).sum::<f64>()
}

#[inline]
fn std_normal_log_density(theta: &[f64]) -> f64 {
    -0.5 * theta.iter().map(|t| t * t).sum::<f64>() - theta.len() as f64 * HALF_LN_2PI
}

/// Gaussian location model: θ ~ N(0, I), X_n ~ N(θ, I).
#[derive(Clone, Debug)]
pub struct GaussianLocation {
    data: Dataset,
    total: Vec<f64>,
}

/// Closed-form coreset posterior N(mu, sigma2 · I) of the Gaussian location model.
#[derive(Clone, Debug, PartialEq)]
pub struct GaussianLocationPosterior {
    pub mean: Vec<f64>,
    pub sigma2: f64,
}

impl GaussianLocation {
    pub fn new(data: Dataset) -> Self {
        let d = data.num_features();
        let mut acc = vec![NeumaierSum::default(); d];
        for n in 0..data.len() {
            for (a, x) in acc.iter_mut().zip(data.row(n)) {
                a.add(*x);
            }
        }
        let total = acc.iter().map(NeumaierSum::value).collect();
        Self { data, total }
    }

    pub fn data(&self) -> &Dataset {
        &self.data
    }

    /// Σ_n X_n (compensated).
    pub fn data_sum(&self) -> &[f64] {
        &self.total
    }

    pub fn point(&self, n: usize) -> &[f64] {
        self.data.row(n)
    }

    /// π_w = N(σ² Σ_m w_m Y_m, σ² I) with σ² = 1 / (1 + Σ_m w_m).
    pub fn exact_posterior(&self, w: &[f64], indices: &[usize]) -> Result<GaussianLocationPosterior> {
        if w.len() != indices.len() {
            return Err(CoresetError::DimensionMismatch { expected: indices.len(), actual: w.len() });
        }
        if let Some((position, &value)) = w.iter().enumerate().find(|(_, v)| **v < 0.0) {
            return Err(CoresetError::NegativeWeight { position, value });
        }
        Ok(self.posterior_unchecked(w, indices))
    }

    /// As [`Self::exact_posterior`] but without the sign check, for the
    /// sum-constrained region where weights may go negative while 1ᵀw
    /// stays at N.
    pub fn posterior_unchecked(&self, w: &[f64], indices: &[usize]) -> GaussianLocationPosterior {
        let d = self.data.num_features();
        let mut weighted = vec![0.0; d];
        let mut mass = 0.0;
        for (&wm, &idx) in w.iter().zip(indices) {
            mass += wm;
            for (acc, y) in weighted.iter_mut().zip(self.data.row(idx)) {
                *acc += wm * y;
            }
        }
        let sigma2 = 1.0 / (1.0 + mass);
        let mean = weighted.into_iter().map(|v| sigma2 * v).collect();
        GaussianLocationPosterior { mean, sigma2 }
    }

    /// Full-data posterior N(Σ X_n / (1 + N), I / (1 + N)).
    pub fn full_posterior(&self) -> GaussianLocationPosterior {
        let sigma2 = 1.0 / (1.0 + self.data.len() as f64);
        GaussianLocationPosterior {
            mean: self.total.iter().map(|v| v * sigma2).collect(),
            sigma2,
        }
    }
}

impl GaussianLocationPosterior {
    pub fn log_density(&self, theta: &[f64]) -> f64 {
        let d = self.mean.len() as f64;
        let sq: f64 = theta.iter().zip(&self.mean).map(|(t, m)| (t - m) * (t - m)).sum();
        -0.5 * sq / self.sigma2 - 0.5 * d * (2.0 * PI * self.sigma2).ln()
    }
}

impl Model for GaussianLocation {
    fn dim(&self) -> usize {
        self.data.num_features()
    }

    fn num_observations(&self) -> usize {
        self.data.len()
    }

    fn log_prior(&self, theta: &[f64]) -> f64 {
        std_normal_log_density(theta)
    }

    #[inline]
    fn log_lik(&self, n: usize, theta: &[f64]) -> f64 {
        let x = self.data.row(n);
        let sq: f64 = x.iter().zip(theta).map(|(a, b)| (a - b) * (a - b)).sum();
        -0.5 * sq - theta.len() as f64 * HALF_LN_2PI
    }

    fn as_gaussian_location(&self) -> Option<&GaussianLocation> {
        Some(self)
    }
}

/// Linear regression with θ = (β, log σ²) ~ N(0, I) and
/// y_n ~ N([1 x_nᵀ]β, σ²).
#[derive(Clone, Debug)]
pub struct LinearRegression {
    data: Dataset,
}

impl LinearRegression {
    pub fn new(data: Dataset) -> Self {
        Self { data }
    }

    pub fn data(&self) -> &Dataset {
        &self.data
    }
}

impl Model for LinearRegression {
    fn dim(&self) -> usize {
        self.data.num_features() + 2
    }

    fn num_observations(&self) -> usize {
        self.data.len()
    }

    fn log_prior(&self, theta: &[f64]) -> f64 {
        std_normal_log_density(theta)
    }

    #[inline]
    fn log_lik(&self, n: usize, theta: &[f64]) -> f64 {
        let p = self.data.num_features();
        let log_var = theta[p + 1];
        let resid = self.data.response(n) - linear_predictor(self.data.row(n), &theta[..=p]);
        -HALF_LN_2PI - 0.5 * log_var - 0.5 * resid * resid * (-log_var).exp()
    }
}

/// Logistic regression with β_i ~ Cauchy(0, 1) and y_n ~ Bern(σ([1 x_nᵀ]β)).
#[derive(Clone, Debug)]
pub struct LogisticRegression {
    data: Dataset,
}

impl LogisticRegression {
    pub fn new(data: Dataset) -> Result<Self> {
        data.check_domain(ModelKind::LogisticRegression)?;
        Ok(Self { data })
    }

    pub fn data(&self) -> &Dataset {
        &self.data
    }
}

impl Model for LogisticRegression {
    fn dim(&self) -> usize {
        self.data.num_features() + 1
    }

    fn num_observations(&self) -> usize {
        self.data.len()
    }

    fn log_prior(&self, theta: &[f64]) -> f64 {
        theta.iter().map(|b| -PI.ln() - (b * b).ln_1p()).sum()
    }

    #[inline]
    fn log_lik(&self, n: usize, theta: &[f64]) -> f64 {
        let eta = linear_predictor(self.data.row(n), theta);
        self.data.response(n) * eta - softplus(eta)
    }
}

/// Poisson regression with β ~ N(0, I) and y_n ~ Poiss(log(1 + e^{[1 x_nᵀ]β})).
#[derive(Clone, Debug)]
pub struct PoissonRegression {
    data: Dataset,
    log_factorials: Vec<f64>,
}

impl PoissonRegression {
    pub fn new(data: Dataset) -> Result<Self> {
        data.check_domain(ModelKind::PoissonRegression)?;
        let log_factorials = data.responses().iter().map(|&y| ln_gamma(y + 1.0)).collect();
        Ok(Self { data, log_factorials })
    }

    pub fn data(&self) -> &Dataset {
        &self.data
    }
}

impl Model for PoissonRegression {
    fn dim(&self) -> usize {
        self.data.num_features() + 1
    }

    fn num_observations(&self) -> usize {
        self.data.len()
    }

    fn log_prior(&self, theta: &[f64]) -> f64 {
        std_normal_log_density(theta)
    }

    #[inline]
    fn log_lik(&self, n: usize, theta: &[f64]) -> f64 {
        let eta = linear_predictor(self.data.row(n), theta);
        let rate = softplus(eta);
        let y = self.data.response(n);
        let log_rate = if eta < -30.0 { eta - 0.5 * eta.exp() } else { rate.ln() };
        let count_term = if y == 0.0 { 0.0 } else { y * log_rate };
        count_term - rate - self.log_factorials[n]
    }
}

/// Any of the built-in models, selected at runtime.
#[derive(Clone, Debug)]
pub enum BuiltinModel {
    GaussianLocation(GaussianLocation),
    Linear(LinearRegression),
    Logistic(LogisticRegression),
    Poisson(PoissonRegression),
}

impl BuiltinModel {
    pub fn new(kind: ModelKind, data: Dataset) -> Result<Self> {
        data.check_domain(kind)?;
        Ok(match kind {
            ModelKind::GaussianLocation => Self::GaussianLocation(GaussianLocation::new(data)),
            ModelKind::LinearRegression => Self::Linear(LinearRegression::new(data)),
            ModelKind::LogisticRegression => Self::Logistic(LogisticRegression::new(data)?),
            ModelKind::PoissonRegression => Self::Poisson(PoissonRegression::new(data)?),
        })
    }

    pub fn kind(&self) -> ModelKind {
        match self {
            Self::GaussianLocation(_) => ModelKind::GaussianLocation,
            Self::Linear(_) => ModelKind::LinearRegression,
            Self::Logistic(_) => ModelKind::LogisticRegression,
            Self::Poisson(_) => ModelKind::PoissonRegression,
        }
    }

    pub fn data(&self) -> &Dataset {
        match self {
            Self::GaussianLocation(m) => m.data(),
            Self::Linear(m) => m.data(),
            Self::Logistic(m) => m.data(),
            Self::Poisson(m) => m.data(),
        }
    }

    fn inner(&self) -> &dyn Model {
        match self {
            Self::GaussianLocation(m) => m,
            Self::Linear(m) => m,
            Self::Logistic(m) => m,
            Self::Poisson(m) => m,
        }
    }
}

impl Model for BuiltinModel {
    fn dim(&self) -> usize {
        self.inner().dim()
    }

    fn num_observations(&self) -> usize {
        self.inner().num_observations()
    }

    fn log_prior(&self, theta: &[f64]) -> f64 {
        self.inner().log_prior(theta)
    }

    #[inline]
    fn log_lik(&self, n: usize, theta: &[f64]) -> f64 {
        match self {
            Self::GaussianLocation(m) => m.log_lik(n, theta),
            Self::Linear(m) => m.log_lik(n, theta),
            Self::Logistic(m) => m.log_lik(n, theta),
            Self::Poisson(m) => m.log_lik(n, theta),
        }
    }

    fn as_gaussian_location(&self) -> Option<&GaussianLocation> {
        match self {
            Self::GaussianLocation(m) => Some(m),
            _ => None,
        }
    }
}
