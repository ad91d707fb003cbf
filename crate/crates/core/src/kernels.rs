//! Markov kernels targeting the coreset posterior π_w, and the chain ensemble.

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::coreset::CoresetState;
use crate::error::{CoresetError, Result};
use crate::model::{GaussianLocationPosterior, Model};
use crate::rng::{chain_stream, StreamState};
use crate::slice::slice_step_1d;

fn default_width() -> f64 {
    2.0
}

fn default_doublings() -> u32 {
    10
}

/// Kernel family κ_w.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum KernelFamily {
    /// Slice sampling along a uniformly random direction.
    HitAndRunSlice {
        #[serde(default = "default_width")]
        init_width: f64,
        #[serde(default = "default_doublings")]
        max_doublings: u32,
    },
    /// One slice update per coordinate, in order.
    CoordSlice {
        #[serde(default = "default_width")]
        init_width: f64,
        #[serde(default = "default_doublings")]
        max_doublings: u32,
    },
    /// θ′ = μ_w + √β(θ − μ_w) + √(1−β)·σ_w·ε; Gaussian location model only.
    GaussianAr { beta: f64 },
    /// Random-walk Metropolis–Hastings with isotropic Gaussian proposals.
    Rwmh { proposal_scale: f64 },
}

impl Default for KernelFamily {
    fn default() -> Self {
        Self::hit_and_run()
    }
}

impl KernelFamily {
    pub fn hit_and_run() -> Self {
        Self::HitAndRunSlice { init_width: default_width(), max_doublings: default_doublings() }
    }

    pub fn coord_slice() -> Self {
        Self::CoordSlice { init_width: default_width(), max_doublings: default_doublings() }
    }

    pub fn validate(&self) -> Result<()> {
        match *self {
            Self::HitAndRunSlice { init_width, max_doublings } | Self::CoordSlice { init_width, max_doublings } => {
                if !(init_width > 0.0 && init_width.is_finite()) || max_doublings == 0 {
                    return Err(CoresetError::InvalidArgument(format!(
                        "slice width {init_width} and doubling limit {max_doublings} must be positive"
                    )));
                }
            }
            Self::GaussianAr { beta } => {
                if !(0.0..=1.0).contains(&beta) {
                    return Err(CoresetError::InvalidArgument(format!("beta must lie in [0, 1], got {beta}")));
                }
            }
            Self::Rwmh { proposal_scale } => {
                if !(proposal_scale > 0.0 && proposal_scale.is_finite()) {
                    return Err(CoresetError::InvalidArgument(format!(
                        "proposal scale must be positive, got {proposal_scale}"
                    )));
                }
            }
        }
        Ok(())
    }
}

/// Per-step counters, summed over chains by the ensemble step.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct KernelDiagnostics {
    pub steps: u64,
    pub log_density_evaluations: u64,
    pub doublings_exhausted: u64,
    pub collapsed: u64,
    pub accepted: u64,
}

impl KernelDiagnostics {
    pub fn merge(&mut self, other: &Self) {
        self.steps += other.steps;
        self.log_density_evaluations += other.log_density_evaluations;
        self.doublings_exhausted += other.doublings_exhausted;
        self.collapsed += other.collapsed;
        self.accepted += other.accepted;
    }
}

/// A kernel bound to a fixed coreset state, with per-state precomputation.
pub struct PreparedKernel<'a, M: Model + ?Sized> {
    family: KernelFamily,
    state: &'a CoresetState,
    model: &'a M,
    gaussian: Option<GaussianLocationPosterior>,
}

impl<'a, M: Model + ?Sized> PreparedKernel<'a, M> {
    pub fn new(family: KernelFamily, state: &'a CoresetState, model: &'a M) -> Result<Self> {
        family.validate()?;
        let gaussian = match family {
            KernelFamily::GaussianAr { .. } => {
                let gl = model
                    .as_gaussian_location()
                    .ok_or(CoresetError::Unsupported("the autoregressive kernel needs the Gaussian location model"))?;
                let post = gl.posterior_unchecked(&state.weights, &state.indices);
                if !(post.sigma2 > 0.0 && post.sigma2.is_finite()) {
                    return Err(CoresetError::InvalidArgument(format!(
                        "coreset posterior variance {} is not positive",
                        post.sigma2
                    )));
                }
                Some(post)
            }
            _ => None,
        };
        Ok(Self { family, state, model, gaussian })
    }

    fn log_density(&self, theta: &[f64]) -> f64 {
        self.state.log_density(self.model, theta)
    }

    /// One transition of chain `chain` (the index is used in error reports).
    pub fn step(&self, theta: &mut [f64], rng: &mut ChaCha8Rng, chain: usize) -> Result<KernelDiagnostics> {
        let mut diag = KernelDiagnostics { steps: 1, ..Default::default() };
        match self.family {
            KernelFamily::GaussianAr { beta } => {
                let post = self.gaussian.as_ref().expect("prepared with posterior");
                let a = beta.sqrt();
                let b = ((1.0 - beta) * post.sigma2).sqrt();
                for (t, m) in theta.iter_mut().zip(&post.mean) {
                    let e: f64 = rng.sample(StandardNormal);
                    *t = m + a * (*t - m) + b * e;
                }
                diag.accepted = 1;
            }
            KernelFamily::HitAndRunSlice { init_width, max_doublings } => {
                let f0 = self.checked_density(theta, chain)?;
                let u = random_direction(theta.len(), rng);
                let origin = theta.to_vec();
                let mut buf = origin.clone();
                let step = slice_step_1d(
                    |t| {
                        for ((b, o), ui) in buf.iter_mut().zip(&origin).zip(&u) {
                            *b = o + t * ui;
                        }
                        self.log_density(&buf)
                    },
                    0.0,
                    f0,
                    init_width,
                    max_doublings,
                    rng,
                );
                for ((t, o), ui) in theta.iter_mut().zip(&origin).zip(&u) {
                    *t = o + step.x * ui;
                }
                record_slice(&mut diag, &step.diagnostics);
            }
            KernelFamily::CoordSlice { init_width, max_doublings } => {
                let mut f0 = self.checked_density(theta, chain)?;
                let mut buf = theta.to_vec();
                for i in 0..theta.len() {
                    let x0 = buf[i];
                    let step = slice_step_1d(
                        |x| {
                            buf[i] = x;
                            self.log_density(&buf)
                        },
                        x0,
                        f0,
                        init_width,
                        max_doublings,
                        rng,
                    );
                    buf[i] = step.x;
                    f0 = step.log_density;
                    record_slice(&mut diag, &step.diagnostics);
                }
                diag.steps = 1;
                theta.copy_from_slice(&buf);
            }
            KernelFamily::Rwmh { proposal_scale } => {
                let f0 = self.checked_density(theta, chain)?;
                let proposal: Vec<f64> =
                    theta.iter().map(|t| t + proposal_scale * rng.sample::<f64, _>(StandardNormal)).collect();
                let f1 = self.log_density(&proposal);
                diag.log_density_evaluations = 2;
                let log_u = rng.random::<f64>().ln();
                if f1.is_finite() && log_u < f1 - f0 {
                    theta.copy_from_slice(&proposal);
                    diag.accepted = 1;
                }
            }
        }
        Ok(diag)
    }

    fn checked_density(&self, theta: &[f64], chain: usize) -> Result<f64> {
        let f = self.log_density(theta);
        if f.is_finite() {
            Ok(f)
        } else {
            Err(CoresetError::NonFiniteLogDensity { chain })
        }
    }
}

fn record_slice(diag: &mut KernelDiagnostics, s: &crate::slice::SliceDiagnostics) {
    diag.log_density_evaluations += u64::from(s.evaluations);
    diag.doublings_exhausted += u64::from(s.doublings_exhausted);
    diag.collapsed += u64::from(s.collapsed);
    diag.accepted += u64::from(!s.collapsed);
}

/// Uniform direction on the unit sphere in `d` dimensions.
pub fn random_direction<R: Rng + ?Sized>(d: usize, rng: &mut R) -> Vec<f64> {
    loop {
        let z: Vec<f64> = (0..d).map(|_| rng.sample(StandardNormal)).collect();
        let norm = z.iter().map(|v| v * v).sum::<f64>().sqrt();
        if norm > 0.0 && norm.is_finite() {
            return z.into_iter().map(|v| v / norm).collect();
        }
    }
}

/// K chain states, each with its own random stream.
#[derive(Clone, Debug)]
pub struct ChainEnsemble {
    pub states: Vec<Vec<f64>>,
    pub rngs: Vec<ChaCha8Rng>,
}

impl ChainEnsemble {
    /// K chains started from iid N(0, I) draws, each drawn from the chain's
    /// own stream of `seed`.
    pub fn standard_normal(seed: u64, chains: usize, dim: usize) -> Result<Self> {
        if chains < 2 {
            return Err(CoresetError::InvalidArgument(format!("need at least 2 chains, got {chains}")));
        }
        let mut rngs: Vec<ChaCha8Rng> = (0..chains).map(|k| chain_stream(seed, k)).collect();
        let states = rngs.iter_mut().map(|r| (0..dim).map(|_| r.sample(StandardNormal)).collect()).collect();
        Ok(Self { states, rngs })
    }

    /// Chains at the given states with fresh streams of `seed`.
    pub fn from_states(seed: u64, states: Vec<Vec<f64>>) -> Result<Self> {
        if states.len() < 2 {
            return Err(CoresetError::InvalidArgument(format!("need at least 2 chains, got {}", states.len())));
        }
        let rngs = (0..states.len()).map(|k| chain_stream(seed, k)).collect();
        Ok(Self { states, rngs })
    }

    pub fn len(&self) -> usize {
        self.states.len()
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }

    pub fn stream_states(&self) -> Vec<StreamState> {
        self.rngs.iter().map(StreamState::capture).collect()
    }

    pub fn restore(states: Vec<Vec<f64>>, streams: &[StreamState]) -> Result<Self> {
        if states.len() != streams.len() {
            return Err(CoresetError::DimensionMismatch { expected: states.len(), actual: streams.len() });
        }
        Ok(Self { states, rngs: streams.iter().map(StreamState::restore).collect() })
    }
}

/// Advances every chain by `steps` transitions of κ_w, in parallel.
///
/// Each chain uses only its own stream, so the result is identical to
/// [`ensemble_step_serial`]. On failure the lowest failing chain's error is
/// returned and the ensemble is left unchanged.
pub fn ensemble_step<M: Model + ?Sized>(
    family: KernelFamily,
    state: &CoresetState,
    model: &M,
    ensemble: &mut ChainEnsemble,
    steps: usize,
) -> Result<KernelDiagnostics> {
    run_ensemble(family, state, model, ensemble, steps, true)
}

pub fn ensemble_step_serial<M: Model + ?Sized>(
    family: KernelFamily,
    state: &CoresetState,
    model: &M,
    ensemble: &mut ChainEnsemble,
    steps: usize,
) -> Result<KernelDiagnostics> {
    run_ensemble(family, state, model, ensemble, steps, false)
}

fn run_ensemble<M: Model + ?Sized>(
    family: KernelFamily,
    state: &CoresetState,
    model: &M,
    ensemble: &mut ChainEnsemble,
    steps: usize,
    parallel: bool,
) -> Result<KernelDiagnostics> {
    let kernel = PreparedKernel::new(family, state, model)?;
    let mut next = ensemble.clone();
    let advance = |(k, (theta, rng)): (usize, (&mut Vec<f64>, &mut ChaCha8Rng))| -> Result<KernelDiagnostics> {
        let mut total = KernelDiagnostics::default();
        for _ in 0..steps {
            total.merge(&kernel.step(theta, rng, k)?);
        }
        Ok(total)
    };
    let results: Vec<Result<KernelDiagnostics>> = if parallel {
        next.states.par_iter_mut().zip(next.rngs.par_iter_mut()).enumerate().map(advance).collect()
    } else {
        next.states.iter_mut().zip(next.rngs.iter_mut()).enumerate().map(advance).collect()
    };
    let mut total = KernelDiagnostics::default();
    for r in results {
        total.merge(&r?);
    }
    *ensemble = next;
    Ok(total)
}
