//! Rank-normalized split-chain bulk effective sample size.

use rustfft::num_complex::Complex;
use rustfft::FftPlanner;
use statrs::distribution::{ContinuousCDF, Normal};

use crate::error::{CoresetError, Result};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EssEstimate {
    pub ess: f64,
    /// The draws were all identical; `ess` is then the draw count.
    pub constant: bool,
}

/// Bulk-ESS of one scalar quantity observed on one or more chains of equal
/// length (at least 8 draws each). Capped at the total number of draws.
pub fn bulk_ess(chains: &[Vec<f64>]) -> Result<EssEstimate> {
    let Some(first) = chains.first() else {
        return Err(CoresetError::InvalidArgument("bulk ESS needs at least one chain".into()));
    };
    let len = first.len();
    if len < 8 {
        return Err(CoresetError::InvalidArgument(format!("bulk ESS needs at least 8 draws per chain, got {len}")));
    }
    if chains.iter().any(|c| c.len() != len) {
        return Err(CoresetError::InvalidArgument("chains must have equal length".into()));
    }
    if chains.iter().flatten().any(|v| !v.is_finite()) {
        return Err(CoresetError::InvalidArgument("bulk ESS of non-finite draws".into()));
    }
    let n_total = (chains.len() * len) as f64;
    let x0 = first[0];
    if chains.iter().flatten().all(|&v| v == x0) {
        return Ok(EssEstimate { ess: n_total, constant: true });
    }

    // split chains; an odd middle draw is dropped
    let half = len / 2;
    let split: Vec<&[f64]> =
        chains.iter().flat_map(|c| [&c[..half], &c[len - half..]]).collect();
    let z = rank_normalize(&split);
    let ess = ess_of_chains(&z);
    Ok(EssEstimate { ess: ess.min(n_total), constant: false })
}

/// Pooled fractional ranks (r − 3/8)/(S + 1/4), ties averaged, mapped
/// through the standard normal quantile.
fn rank_normalize(chains: &[&[f64]]) -> Vec<Vec<f64>> {
    let pooled: Vec<f64> = chains.iter().flat_map(|c| c.iter().copied()).collect();
    let s = pooled.len();
    let mut order: Vec<usize> = (0..s).collect();
    order.sort_by(|&a, &b| pooled[a].total_cmp(&pooled[b]));
    let mut ranks = vec![0.0; s];
    let mut i = 0;
    while i < s {
        let mut j = i;
        while j + 1 < s && pooled[order[j + 1]] == pooled[order[i]] {
            j += 1;
        }
        // ranks are 1-based
        let avg = (i + j) as f64 / 2.0 + 1.0;
        for &o in &order[i..=j] {
            ranks[o] = avg;
        }
        i = j + 1;
    }
    let normal = Normal::standard();
    let z: Vec<f64> = ranks.iter().map(|r| normal.inverse_cdf((r - 0.375) / (s as f64 + 0.25))).collect();
    let n = chains[0].len();
    z.chunks(n).map(<[f64]>::to_vec).collect()
}

/// Biased autocovariances (1/n) Σ_i y_i y_{i+t} of the centered series, via FFT.
fn autocovariance(x: &[f64]) -> Vec<f64> {
    let n = x.len();
    let mean = x.iter().sum::<f64>() / n as f64;
    let size = (2 * n).next_power_of_two();
    let mut buf: Vec<Complex<f64>> =
        x.iter().map(|v| Complex::new(v - mean, 0.0)).chain(std::iter::repeat(Complex::new(0.0, 0.0))).take(size).collect();
    let mut planner = FftPlanner::new();
    planner.plan_fft_forward(size).process(&mut buf);
    for c in buf.iter_mut() {
        *c = Complex::new(c.norm_sqr(), 0.0);
    }
    planner.plan_fft_inverse(size).process(&mut buf);
    buf[..n].iter().map(|c| c.re / size as f64 / n as f64).collect()
}

/// ESS from multiple chains with Geyer's initial positive then monotone
/// sequence truncation.
fn ess_of_chains(chains: &[Vec<f64>]) -> f64 {
    let m = chains.len();
    let n = chains[0].len();
    let acov: Vec<Vec<f64>> = chains.iter().map(|c| autocovariance(c)).collect();
    let chain_means: Vec<f64> = chains.iter().map(|c| c.iter().sum::<f64>() / n as f64).collect();
    let nf = n as f64;
    let mean_acov = |t: usize| acov.iter().map(|a| a[t]).sum::<f64>() / m as f64;
    let mean_var = mean_acov(0) * nf / (nf - 1.0);
    let mut var_plus = mean_var * (nf - 1.0) / nf;
    if m > 1 {
        let grand = chain_means.iter().sum::<f64>() / m as f64;
        var_plus += chain_means.iter().map(|c| (c - grand).powi(2)).sum::<f64>() / (m - 1) as f64;
    }

    let rho_at = |t: usize| 1.0 - (mean_var - mean_acov(t)) / var_plus;
    let mut rho = vec![0.0; n];
    let mut even = 1.0;
    let mut odd = rho_at(1);
    rho[0] = even;
    rho[1] = odd;
    let mut t = 0;
    while t + 5 < n && (even + odd).is_finite() && even + odd > 0.0 {
        t += 2;
        even = rho_at(t);
        odd = rho_at(t + 1);
        if even + odd >= 0.0 {
            rho[t] = even;
            rho[t + 1] = odd;
        }
    }
    let max_t = t;
    if even > 0.0 {
        rho[max_t] = even;
    }
    // enforce a monotone sequence of pair sums
    let mut t = 0;
    while t + 4 <= max_t {
        t += 2;
        if rho[t] + rho[t + 1] > rho[t - 2] + rho[t - 1] {
            rho[t] = (rho[t - 2] + rho[t - 1]) / 2.0;
            rho[t + 1] = rho[t];
        }
    }
    let draws = (m * n) as f64;
    let tau = -1.0 + 2.0 * rho[..max_t].iter().sum::<f64>() + rho[max_t];
    let tau = tau.max(1.0 / draws.log10());
    draws / tau
}
