//! Monte Carlo estimate of the KL gradient with respect to the coreset weights.
//!
//! For chain states θ_1..θ_K and a subsample 𝒮 of size S, the estimate is
//!
//! ```text
//! g = 1/(K−1) Σ_k ℓ̄(θ_k) · ( wᵀ ℓ̄(θ_k) − (N/S) Σ_{s∈𝒮} ℓ̄_s(θ_k) )
//! ```
//!
//! where ℓ̄ are log-likelihoods centered across the K chains. Centering
//! removes any additive constant, which is what makes the estimator usable
//! with black-box log-likelihoods. The Gaussian location model also gets an
//! analytic gradient and an exact-coreset solver used as oracles.

use std::collections::HashMap;
use std::time::{Duration, Instant};

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rayon::prelude::*;

use crate::coreset::FeasibleRegion;
use crate::error::{CoresetError, Result};
use crate::model::{check_dim, GaussianLocation, Model};
use crate::numeric::NeumaierSum;

/// Centered log-likelihoods, one column per chain.
#[derive(Clone, Debug)]
pub struct CenteredLogLik {
    /// M×K block for the coreset points.
    pub coreset_block: DMatrix<f64>,
    /// S×K block for the data subsample.
    pub data_block: DMatrix<f64>,
}

impl CenteredLogLik {
    pub fn chains(&self) -> usize {
        self.coreset_block.ncols()
    }

    pub fn coreset_size(&self) -> usize {
        self.coreset_block.nrows()
    }

    pub fn subsample_size(&self) -> usize {
        self.data_block.nrows()
    }
}

#[derive(Clone, Debug)]
pub struct GradientEstimate {
    pub g: Vec<f64>,
    pub subsample_size: usize,
    pub chains: usize,
    pub elapsed: Duration,
}

/// S distinct indices drawn uniformly without replacement from `0..n`.
/// `S == N` returns `0..N` in order without consuming randomness.
pub fn subsample_indices<R: Rng + ?Sized>(n: usize, s: usize, rng: &mut R) -> Result<Vec<usize>> {
    if s == 0 || s > n {
        return Err(CoresetError::InvalidArgument(format!("subsample size {s} must lie in 1..={n}")));
    }
    if s == n {
        return Ok((0..n).collect());
    }
    Ok(rand::seq::index::sample(rng, n, s).into_vec())
}

fn is_identity(indices: &[usize], n: usize) -> bool {
    indices.len() == n && indices.iter().enumerate().all(|(i, &s)| i == s)
}

fn center_rows(block: &mut DMatrix<f64>) {
    let k = block.ncols() as f64;
    for mut row in block.row_iter_mut() {
        let mean = row.iter().sum::<f64>() / k;
        row.iter_mut().for_each(|v| *v -= mean);
    }
}

/// Evaluates and centers ℓ_n(θ_k) for the coreset points and the subsample.
///
/// Each (index, chain) pair is evaluated once: coreset points that also
/// appear in the subsample reuse the subsample evaluation.
pub fn center_logliks<M: Model + ?Sized>(
    model: &M,
    coreset_indices: &[usize],
    subsample: &[usize],
    thetas: &[Vec<f64>],
) -> Result<CenteredLogLik> {
    let k = thetas.len();
    if k < 2 {
        return Err(CoresetError::InvalidArgument(format!("need at least 2 chains, got {k}")));
    }
    let n = model.num_observations();
    for theta in thetas {
        check_dim(model.dim(), theta)?;
    }
    if let Some(&bad) = coreset_indices.iter().chain(subsample).find(|&&i| i >= n) {
        return Err(CoresetError::IndexOutOfRange { index: bad, len: n });
    }
    let m = coreset_indices.len();
    let s = subsample.len();
    let full = is_identity(subsample, n);
    let shared: HashMap<usize, usize> = if full {
        HashMap::new()
    } else {
        coreset_indices.iter().enumerate().map(|(row, &i)| (i, row)).collect()
    };

    let columns: Vec<(Vec<f64>, Vec<f64>)> = thetas
        .par_iter()
        .map(|theta| {
            let data: Vec<f64> = subsample.iter().map(|&i| model.log_lik(i, theta)).collect();
            let mut core = vec![f64::NAN; m];
            if full {
                for (c, &i) in core.iter_mut().zip(coreset_indices) {
                    *c = data[i];
                }
            } else {
                for (pos, &i) in subsample.iter().enumerate() {
                    if let Some(&row) = shared.get(&i) {
                        core[row] = data[pos];
                    }
                }
                for (c, &i) in core.iter_mut().zip(coreset_indices) {
                    if c.is_nan() {
                        *c = model.log_lik(i, theta);
                    }
                }
            }
            (core, data)
        })
        .collect();

    let mut coreset_block = DMatrix::zeros(m, k);
    let mut data_block = DMatrix::zeros(s, k);
    for (j, (core, data)) in columns.into_iter().enumerate() {
        coreset_block.set_column(j, &DVector::from_vec(core));
        data_block.set_column(j, &DVector::from_vec(data));
    }
    center_rows(&mut coreset_block);
    center_rows(&mut data_block);
    Ok(CenteredLogLik { coreset_block, data_block })
}

/// The unbiased gradient estimate for weights `w` given centered
/// log-likelihoods over a subsample of size `s` out of `n`.
pub fn estimate_gradient(w: &[f64], centered: &CenteredLogLik, n: usize, s: usize) -> Result<GradientEstimate> {
    let start = Instant::now();
    let m = centered.coreset_size();
    let k = centered.chains();
    if w.len() != m {
        return Err(CoresetError::DimensionMismatch { expected: m, actual: w.len() });
    }
    if centered.subsample_size() != s {
        return Err(CoresetError::DimensionMismatch { expected: s, actual: centered.subsample_size() });
    }
    if k < 2 {
        return Err(CoresetError::InvalidArgument("need at least 2 chains".into()));
    }
    let scale = n as f64 / s as f64;
    let mut g = vec![0.0; m];
    for j in 0..k {
        let a = centered.coreset_block.column(j);
        let mut data_sum = NeumaierSum::default();
        for v in centered.data_block.column(j).iter() {
            data_sum.add(*v);
        }
        let coreset_term: f64 = a.iter().zip(w).map(|(x, wm)| x * wm).sum();
        let c = coreset_term - scale * data_sum.value();
        for (gi, ai) in g.iter_mut().zip(a.iter()) {
            *gi += c * ai;
        }
    }
    let denom = (k - 1) as f64;
    g.iter_mut().for_each(|v| *v /= denom);
    Ok(GradientEstimate { g, subsample_size: s, chains: k, elapsed: start.elapsed() })
}

/// G = A Aᵀ / (K − 1) for the M×K centered coreset block A.
pub fn gram_matrix(centered: &CenteredLogLik) -> DMatrix<f64> {
    let a = &centered.coreset_block;
    let denom = (a.ncols().max(2) - 1) as f64;
    (a * a.transpose()) / denom
}

/// Subsampling-noise diagnostic
/// V = (1/(MN)) Σ_m Σ_n ((1/(K−1)) Σ_k ℓ̄_m(θ_k) Δ_kn)², with
/// Δ_kn = ℓ̄_n(θ_k) − (1/N) Σ_n' ℓ̄_n'(θ_k). Needs the full data block.
pub fn subnoise_diagnostic(centered: &CenteredLogLik, n: usize) -> Result<f64> {
    if centered.subsample_size() != n {
        return Err(CoresetError::InvalidArgument(format!(
            "diagnostic needs the full data block ({n} rows), got {}",
            centered.subsample_size()
        )));
    }
    let k = centered.chains();
    let m = centered.coreset_size();
    let mut delta = centered.data_block.clone();
    for mut col in delta.column_iter_mut() {
        let mean = col.iter().sum::<f64>() / n as f64;
        col.iter_mut().for_each(|v| *v -= mean);
    }
    let b = (&centered.coreset_block * delta.transpose()) / (k - 1) as f64;
    Ok(b.iter().map(|v| v * v).sum::<f64>() / (m * n) as f64)
}

/// Cov_{π_w}(ℓ_m, Σ_j w_j ℓ_j − Σ_n ℓ_n) in closed form for the Gaussian
/// location model, using Cov(ℓ_a, ℓ_b) = σ²(X_a − μ)ᵀ(X_b − μ) + σ⁴d/2
/// under π_w = N(μ, σ²I).
pub fn analytic_gradient(model: &GaussianLocation, w: &[f64], indices: &[usize]) -> Result<Vec<f64>> {
    if w.len() != indices.len() {
        return Err(CoresetError::DimensionMismatch { expected: indices.len(), actual: w.len() });
    }
    let d = model.dim();
    let n = model.num_observations() as f64;
    let post = model.posterior_unchecked(w, indices);
    let (mu, s2) = (&post.mean, post.sigma2);
    let mass: f64 = w.iter().sum();
    // Σ_j w_j (Y_j − μ) − Σ_n (X_n − μ)
    let mut direction: Vec<f64> = model.data_sum().iter().zip(mu).map(|(t, m)| -(t - n * m)).collect();
    for (&wj, &j) in w.iter().zip(indices) {
        for ((dir, y), m) in direction.iter_mut().zip(model.point(j)).zip(mu) {
            *dir += wj * (y - m);
        }
    }
    let constant = s2 * s2 * d as f64 / 2.0 * (mass - n);
    Ok(indices
        .iter()
        .map(|&i| {
            let dot: f64 = model.point(i).iter().zip(mu).zip(&direction).map(|((y, m), dir)| (y - m) * dir).sum();
            s2 * dot + constant
        })
        .collect())
}

/// Exact coreset weights w* for the Gaussian location model, if any.
///
/// Exactness (Σ_m w_m ℓ_m ≡ Σ_n ℓ_n + c) requires Yw = Σ_n X_n and
/// 1ᵀw = N, so the solver works on the augmented system [Y; 1ᵀ] w = [X1; N].
/// The sum-only region uses the minimum-norm least-squares solution; the
/// sign-constrained regions use active-set nonnegative least squares.
/// Returns `None` when the residual exceeds 1e-6·‖X1‖.
pub fn exact_coreset_weights(model: &GaussianLocation, indices: &[usize], region: FeasibleRegion) -> Option<Vec<f64>> {
    let d = model.dim();
    let m = indices.len();
    let n = model.num_observations() as f64;
    let mut a = DMatrix::zeros(d + 1, m);
    for (col, &i) in indices.iter().enumerate() {
        for (row, y) in model.point(i).iter().enumerate() {
            a[(row, col)] = *y;
        }
        a[(d, col)] = 1.0;
    }
    let mut b = DVector::zeros(d + 1);
    for (row, t) in model.data_sum().iter().enumerate() {
        b[row] = *t;
    }
    b[d] = n;

    let w = match region {
        FeasibleRegion::HyperplaneSumN { .. } => least_squares(&a, &b),
        FeasibleRegion::Nonneg | FeasibleRegion::SimplexSumN { .. } => nnls(&a, &b),
    };
    let residual = (&a * &w - &b).norm();
    let target_norm = DVector::from_column_slice(model.data_sum()).norm().max(f64::MIN_POSITIVE);
    if !residual.is_finite() || residual > 1e-6 * target_norm.max(n) {
        return None;
    }
    let mut w: Vec<f64> = w.iter().copied().collect();
    region.project_in_place(&mut w);
    Some(w)
}

fn least_squares(a: &DMatrix<f64>, b: &DVector<f64>) -> DVector<f64> {
    let svd = a.clone().svd(true, true);
    let eps = 1e-13 * svd.singular_values.max();
    svd.solve(b, eps).expect("SVD computed with U and V")
}

/// Lawson–Hanson active-set nonnegative least squares.
fn nnls(a: &DMatrix<f64>, b: &DVector<f64>) -> DVector<f64> {
    let n = a.ncols();
    let mut x = DVector::zeros(n);
    let mut passive = vec![false; n];
    let tol = 1e-13 * a.norm() * b.norm().max(1.0);
    let max_outer = 3 * n + 10;
    for _ in 0..max_outer {
        let grad = a.transpose() * (b - a * &x);
        let candidate = (0..n)
            .filter(|&j| !passive[j])
            .max_by(|&i, &j| grad[i].total_cmp(&grad[j]))
            .filter(|&j| grad[j] > tol);
        let Some(j) = candidate else { break };
        passive[j] = true;
        for inner in 0..(3 * n + 10) {
            let cols: Vec<usize> = (0..n).filter(|&i| passive[i]).collect();
            let sub = a.select_columns(&cols);
            let z = least_squares(&sub, b);
            if z.iter().all(|&v| v > 0.0) {
                x.fill(0.0);
                for (&c, &v) in cols.iter().zip(z.iter()) {
                    x[c] = v;
                }
                break;
            }
            if inner == 0 && z[cols.iter().position(|&c| c == j).unwrap()] <= 0.0 && x[j] == 0.0 {
                // the newly freed variable cannot move; treat it as converged
                passive[j] = false;
                break;
            }
            let mut alpha = f64::INFINITY;
            for (&c, &v) in cols.iter().zip(z.iter()) {
                if v <= 0.0 {
                    let denom = x[c] - v;
                    if denom > 0.0 {
                        alpha = alpha.min(x[c] / denom);
                    }
                }
            }
            if !alpha.is_finite() {
                alpha = 0.0;
            }
            for (&c, &v) in cols.iter().zip(z.iter()) {
                x[c] += alpha * (v - x[c]);
            }
            for &c in &cols {
                if x[c] <= 1e-14 * x.amax().max(1.0) {
                    x[c] = 0.0;
                    passive[c] = false;
                }
            }
        }
    }
    x
}
