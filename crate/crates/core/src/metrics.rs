//! Posterior-quality and efficiency metrics.

use nalgebra::{Cholesky, DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::coreset::CoresetState;
use crate::error::{CoresetError, Result};
use crate::ess::bulk_ess;
use crate::model::{GaussianLocation, GaussianLocationPosterior};
use crate::numeric::NeumaierSum;

/// Mean and covariance of a set of draws (or of a known Gaussian).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MomentSummary {
    pub mean: Vec<f64>,
    /// Row-major d×d covariance.
    pub cov: Vec<f64>,
    pub n: usize,
}

impl MomentSummary {
    /// Sample mean and (n−1)-normalized covariance of row draws.
    pub fn from_draws(draws: &[Vec<f64>]) -> Result<Self> {
        let n = draws.len();
        if n < 2 {
            return Err(CoresetError::InvalidArgument(format!("moments need at least 2 draws, got {n}")));
        }
        let d = draws[0].len();
        if let Some(bad) = draws.iter().find(|r| r.len() != d) {
            return Err(CoresetError::DimensionMismatch { expected: d, actual: bad.len() });
        }
        let mut mean = vec![0.0; d];
        for row in draws {
            for (m, v) in mean.iter_mut().zip(row) {
                *m += v;
            }
        }
        mean.iter_mut().for_each(|m| *m /= n as f64);
        let mut cov = vec![0.0; d * d];
        for row in draws {
            for i in 0..d {
                let di = row[i] - mean[i];
                for j in 0..=i {
                    cov[i * d + j] += di * (row[j] - mean[j]);
                }
            }
        }
        for i in 0..d {
            for j in 0..=i {
                let v = cov[i * d + j] / (n - 1) as f64;
                cov[i * d + j] = v;
                cov[j * d + i] = v;
            }
        }
        Ok(Self { mean, cov, n })
    }

    /// N(mean, sigma2·I) as a summary with `n = 0`.
    pub fn isotropic(mean: &[f64], sigma2: f64) -> Self {
        let d = mean.len();
        let mut cov = vec![0.0; d * d];
        for i in 0..d {
            cov[i * d + i] = sigma2;
        }
        Self { mean: mean.to_vec(), cov, n: 0 }
    }

    pub fn from_posterior(post: &GaussianLocationPosterior) -> Self {
        Self::isotropic(&post.mean, post.sigma2)
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    fn cov_matrix(&self) -> DMatrix<f64> {
        DMatrix::from_row_slice(self.dim(), self.dim(), &self.cov)
    }
}

/// One evaluation point of a training or sampling run.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct MetricsRecord {
    pub iteration: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub exact_kl: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub two_moment_kl: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub min_ess_per_sec: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rel_mean_err: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rel_cov_err: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub weight_error_sq: Option<f64>,
    pub wall_clock: f64,
    pub cost_proxy: f64,
}

/// x − ln(1 + x), accurate for small |x|.
fn x_minus_log1p(x: f64) -> f64 {
    if x.abs() < 1e-4 {
        x * x * (0.5 - x * (1.0 / 3.0 - x * 0.25))
    } else {
        x - x.ln_1p()
    }
}

/// KL(π_w ‖ π) in closed form for the Gaussian location model.
///
/// With s = 1ᵀw and r = (1+N)/(1+s):
/// ½( d(r − 1 − ln r) + (1+N)/(1+s)² ‖Yw − (1+s)/(1+N)·X1‖² ),
/// which is ‖Yw − X1‖²/(2(1+N)) when s = N.
pub fn gaussian_location_kl(state: &CoresetState, model: &GaussianLocation) -> f64 {
    let d = model.data().num_features();
    let n = model.data().len() as f64;
    let mut mass = NeumaierSum::default();
    state.weights.iter().for_each(|w| mass.add(*w));
    let s = mass.value();
    let mut yw = vec![NeumaierSum::default(); d];
    for (&w, &i) in state.weights.iter().zip(&state.indices) {
        for (acc, y) in yw.iter_mut().zip(model.point(i)) {
            acc.add(w * y);
        }
    }
    let ratio = (1.0 + s) / (1.0 + n);
    let sq: f64 = yw
        .iter()
        .zip(model.data_sum())
        .map(|(a, t)| {
            let diff = a.value() - ratio * t;
            diff * diff
        })
        .sum();
    let u = (n - s) / (1.0 + s);
    0.5 * (d as f64 * x_minus_log1p(u) + (1.0 + n) / ((1.0 + s) * (1.0 + s)) * sq)
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct KlValue {
    pub value: f64,
    /// A covariance needed diagonal regularization to be factorized.
    pub regularized: bool,
}

fn cholesky_with_regularization(mut m: DMatrix<f64>) -> Result<(Cholesky<f64, nalgebra::Dyn>, bool)> {
    if let Some(c) = m.clone().cholesky() {
        return Ok((c, false));
    }
    let d = m.nrows();
    let jitter = 1e-10 * m.trace() / d as f64;
    if !(jitter > 0.0) {
        return Err(CoresetError::SingularCovariance);
    }
    for i in 0..d {
        m[(i, i)] += jitter;
    }
    m.cholesky().map(|c| (c, true)).ok_or(CoresetError::SingularCovariance)
}

fn log_det(c: &Cholesky<f64, nalgebra::Dyn>) -> f64 {
    2.0 * c.l_dirty().diagonal().iter().map(|v| v.ln()).sum::<f64>()
}

/// KL(N(μ̂, Σ̂) ‖ N(μ, Σ)).
pub fn two_moment_kl(hat: &MomentSummary, reference: &MomentSummary) -> Result<KlValue> {
    let d = reference.dim();
    if hat.dim() != d {
        return Err(CoresetError::DimensionMismatch { expected: d, actual: hat.dim() });
    }
    let (chol_ref, reg_ref) = cholesky_with_regularization(reference.cov_matrix())?;
    let (chol_hat, reg_hat) = cholesky_with_regularization(hat.cov_matrix())?;
    let trace = chol_ref.solve(&hat.cov_matrix()).trace();
    let diff = DVector::from_iterator(d, reference.mean.iter().zip(&hat.mean).map(|(a, b)| a - b));
    let maha = diff.dot(&chol_ref.solve(&diff));
    let value = 0.5 * (trace - d as f64 + maha + log_det(&chol_ref) - log_det(&chol_hat));
    Ok(KlValue { value: value.max(0.0), regularized: reg_ref || reg_hat })
}

/// (‖μ − μ̂‖/‖μ‖, ‖Σ − Σ̂‖_F/‖Σ‖_F).
pub fn relative_errors(hat: &MomentSummary, reference: &MomentSummary) -> Result<(f64, f64)> {
    if hat.dim() != reference.dim() {
        return Err(CoresetError::DimensionMismatch { expected: reference.dim(), actual: hat.dim() });
    }
    let norm = |v: &mut dyn Iterator<Item = f64>| v.map(|x| x * x).sum::<f64>().sqrt();
    let mean_ref = norm(&mut reference.mean.iter().copied());
    let cov_ref = norm(&mut reference.cov.iter().copied());
    if mean_ref == 0.0 || cov_ref == 0.0 {
        return Err(CoresetError::InvalidArgument("reference moments have zero norm".into()));
    }
    let mean_diff = norm(&mut reference.mean.iter().zip(&hat.mean).map(|(a, b)| a - b));
    let cov_diff = norm(&mut reference.cov.iter().zip(&hat.cov).map(|(a, b)| a - b));
    Ok((mean_diff / mean_ref, cov_diff / cov_ref))
}

/// Minimum bulk-ESS over coordinates. `chains[c][i]` is draw `i` of chain `c`.
pub fn min_bulk_ess(chains: &[Vec<Vec<f64>>]) -> Result<f64> {
    let d = chains.first().and_then(|c| c.first()).map(Vec::len).ok_or_else(|| {
        CoresetError::InvalidArgument("no draws".into())
    })?;
    let mut min = f64::INFINITY;
    for j in 0..d {
        let coord: Vec<Vec<f64>> = chains.iter().map(|c| c.iter().map(|row| row[j]).collect()).collect();
        min = min.min(bulk_ess(&coord)?.ess);
    }
    Ok(min)
}

/// Minimum marginal bulk-ESS divided by the sampling wall-clock time.
pub fn min_ess_per_sec(chains: &[Vec<Vec<f64>>], sampling_seconds: f64) -> Result<f64> {
    if !(sampling_seconds > 0.0) {
        return Err(CoresetError::InvalidArgument(format!("sampling time must be positive, got {sampling_seconds}")));
    }
    Ok(min_bulk_ess(chains)? / sampling_seconds)
}

/// The heuristic expected-KL bound
///
/// e^{−2c(t^α−1)/α} · N/(2M) + c(N−S)d(K+d)(1 + ln t^{1−α}) / (4S(K−1)t^{1−α}),
///
/// where `c` is the constant in the learning rate γ = cN/M.
#[allow(clippy::too_many_arguments)]
pub fn heuristic_bound(t: f64, alpha: f64, c: f64, n: f64, m: f64, s: f64, k: f64, d: f64) -> f64 {
    let first = (-2.0 * c * (t.powf(alpha) - 1.0) / alpha).exp() * n / (2.0 * m);
    let tp = t.powf(1.0 - alpha);
    let second = c * (n - s) * d * (k + d) * (1.0 + tp.ln()) / (4.0 * s * (k - 1.0) * tp);
    first + second
}
