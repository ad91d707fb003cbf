//! The Coreset MCMC outer loop.
//!
//! Each iteration, in order:
//!
//! 1. draw the subsample 𝒮_t (skipped when S = N),
//! 2. center the log-likelihoods at the current chain states θ_t,
//! 3. estimate the gradient and take a projected optimizer step to w_{t+1},
//! 4. advance every chain with κ_{w_{t+1}}.
//!
//! The weight update always sees the chain states of the previous
//! iteration. Training is deterministic given the seed, and a checkpoint
//! captures everything needed to resume bit-exactly.

use std::fs;
use std::path::Path;
use std::time::Instant;

use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::coreset::{init_weights, select_points, CoresetState, RegionKind};
use crate::error::{CoresetError, Result};
use crate::grad::{center_logliks, estimate_gradient, exact_coreset_weights, subsample_indices};
use crate::kernels::{ensemble_step, ChainEnsemble, KernelDiagnostics, KernelFamily};
use crate::metrics::{gaussian_location_kl, MetricsRecord};
use crate::model::Model;
use crate::optimizer::{OptimizerConfig, OptimizerState, Schedule};
use crate::rng::{self, StreamState, SELECT_STREAM, SUBSAMPLE_STREAM};

fn default_burn_in() -> u64 {
    100
}

fn default_metric_every() -> u64 {
    10
}

fn default_one() -> usize {
    1
}

/// Training hyperparameters.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainConfig {
    /// Number of adaptation iterations T.
    pub iterations: u64,
    /// Number of chains K ≥ 2.
    pub chains: usize,
    /// Subsample size S; `None` means the full data (S = N).
    #[serde(default)]
    pub subsample_size: Option<usize>,
    /// Coreset size M.
    pub coreset_size: usize,
    /// Kernel-only iterations before adaptation starts.
    #[serde(default = "default_burn_in")]
    pub burn_in: u64,
    /// Learning-rate schedule; `None` means γ = N/(10M) with α = 1 for
    /// full data and α = 0.5 when subsampling.
    #[serde(default)]
    pub schedule: Option<Schedule>,
    #[serde(default)]
    pub optimizer: OptimizerConfig,
    #[serde(default)]
    pub kernel: KernelFamily,
    /// Kernel transitions per weight update.
    #[serde(default = "default_one")]
    pub kernel_steps: usize,
    #[serde(default = "default_region")]
    pub region: RegionKind,
    #[serde(default)]
    pub seed: u64,
    /// Metric evaluation cadence in iterations.
    #[serde(default = "default_metric_every")]
    pub metric_every: u64,
    /// Weight trajectory stride; `None` means max(1, T/1000).
    #[serde(default)]
    pub trajectory_stride: Option<u64>,
    /// Record ‖w_t − w*‖² when exact coreset weights are available.
    #[serde(default)]
    pub track_weight_error: bool,
}

fn default_region() -> RegionKind {
    RegionKind::Nonneg
}

impl TrainConfig {
    /// Minimal configuration with defaults for everything else.
    pub fn new(iterations: u64, chains: usize, coreset_size: usize) -> Self {
        Self {
            iterations,
            chains,
            subsample_size: None,
            coreset_size,
            burn_in: default_burn_in(),
            schedule: None,
            optimizer: OptimizerConfig::default(),
            kernel: KernelFamily::default(),
            kernel_steps: 1,
            region: default_region(),
            seed: 0,
            metric_every: default_metric_every(),
            trajectory_stride: None,
            track_weight_error: false,
        }
    }

    /// The Gaussian location study defaults: T = 5000, K = 20, M = 30,
    /// full-data gradients, plain SGD with γ = N/(10M), and the
    /// autoregressive kernel with β = 0.8. Weights live on the hyperplane
    /// 1ᵀw = N.
    pub fn gaussian_defaults(n: usize) -> Self {
        let mut c = Self::new(5000, 20, 30);
        c.schedule = Some(Schedule::default_for(n, 30, false));
        c.kernel = KernelFamily::GaussianAr { beta: 0.8 };
        c.region = RegionKind::HyperplaneSumN;
        c
    }

    pub fn subsample_for(&self, n: usize) -> usize {
        self.subsample_size.unwrap_or(n)
    }

    pub fn schedule_for(&self, n: usize) -> Schedule {
        self.schedule
            .unwrap_or_else(|| Schedule::default_for(n, self.coreset_size, self.subsample_for(n) < n))
    }

    pub fn stride(&self) -> u64 {
        self.trajectory_stride.unwrap_or((self.iterations / 1000).max(1)).max(1)
    }

    /// (M + S)·ln K·t.
    pub fn cost_proxy(&self, n: usize, t: u64) -> f64 {
        cost_proxy(self.coreset_size, self.subsample_for(n), self.chains, t)
    }

    pub fn validate(&self, n: usize) -> Result<()> {
        let bad = |m: String| Err(CoresetError::InvalidArgument(m));
        if self.chains < 2 {
            return bad(format!("need at least 2 chains, got {}", self.chains));
        }
        if self.coreset_size == 0 || self.coreset_size > n {
            return bad(format!("coreset size {} must lie in 1..={n}", self.coreset_size));
        }
        let s = self.subsample_for(n);
        if s == 0 || s > n {
            return bad(format!("subsample size {s} must lie in 1..={n}"));
        }
        if self.metric_every == 0 || self.kernel_steps == 0 {
            return bad("metric cadence and kernel steps must be positive".into());
        }
        if let Some(s) = self.schedule {
            Schedule::new(s.gamma0, s.alpha)?;
        }
        self.kernel.validate()
    }
}

/// (M + S)·ln K·t.
pub fn cost_proxy(m: usize, s: usize, k: usize, t: u64) -> f64 {
    (m + s) as f64 * (k as f64).ln() * t as f64
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryPoint {
    pub iteration: u64,
    pub weights: Vec<f64>,
}

/// Everything a run produces.
#[derive(Clone, Debug)]
pub struct TrainResult {
    pub state: CoresetState,
    pub trajectory: Vec<TrajectoryPoint>,
    pub records: Vec<MetricsRecord>,
    pub chain_states: Vec<Vec<f64>>,
    pub iterations_completed: u64,
    pub kernel_diagnostics: KernelDiagnostics,
    /// Adaptation wall-clock seconds (excludes burn-in and metrics).
    pub train_seconds: f64,
}

/// Training stopped early; `partial` holds everything up to the failure.
#[derive(Debug, Error)]
#[error("training aborted at iteration {iteration}: {error}")]
pub struct TrainFailure {
    pub iteration: u64,
    pub error: CoresetError,
    pub partial: Box<TrainResult>,
}

/// Draws taken with frozen weights after adaptation.
#[derive(Clone, Debug)]
pub struct Samples {
    /// `chains[c][i]` is draw `i` of chain `c`.
    pub chains: Vec<Vec<Vec<f64>>>,
    pub kernel_steps: u64,
    pub seconds: f64,
}

impl Samples {
    /// Round-robin interleaving of the chains, truncated to `n` rows.
    pub fn rows(&self, n: usize) -> Vec<Vec<f64>> {
        let per_chain = self.chains.first().map_or(0, Vec::len);
        let mut out = Vec::with_capacity(n);
        'outer: for i in 0..per_chain {
            for c in &self.chains {
                if out.len() == n {
                    break 'outer;
                }
                out.push(c[i].clone());
            }
        }
        out
    }

    pub fn len(&self) -> usize {
        self.chains.iter().map(Vec::len).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Serializable trainer state.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Checkpoint {
    pub config: TrainConfig,
    pub iteration: u64,
    pub state: CoresetState,
    pub optimizer: crate::optimizer::OptimizerState,
    pub chain_states: Vec<Vec<f64>>,
    pub chain_streams: Vec<StreamState>,
    pub subsample_stream: StreamState,
    pub trajectory: Vec<TrajectoryPoint>,
    pub records: Vec<MetricsRecord>,
    pub train_seconds: f64,
}

impl Checkpoint {
    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        fs::write(path, serde_json::to_vec(self)?)?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Ok(serde_json::from_slice(&fs::read(path)?)?)
    }
}

/// Stateful driver for one training run.
pub struct Trainer<'a, M: Model + ?Sized> {
    config: TrainConfig,
    model: &'a M,
    n: usize,
    s: usize,
    schedule: Schedule,
    state: CoresetState,
    optimizer: OptimizerState,
    ensemble: ChainEnsemble,
    subsample_rng: ChaCha8Rng,
    full_indices: Vec<usize>,
    t: u64,
    trajectory: Vec<TrajectoryPoint>,
    records: Vec<MetricsRecord>,
    train_seconds: f64,
    kernel_diagnostics: KernelDiagnostics,
    w_star: Option<Vec<f64>>,
}

impl<'a, M: Model + ?Sized> Trainer<'a, M> {
    /// Selects M points uniformly, sets w = N/M, starts the chains from
    /// N(0, I) and runs the burn-in.
    pub fn new(config: TrainConfig, model: &'a M) -> Result<Self> {
        let n = model.num_observations();
        config.validate(n)?;
        let mut select_rng = rng::stream(config.seed, SELECT_STREAM);
        let indices = select_points(n, config.coreset_size, None, &mut select_rng)?;
        Self::with_indices(config, model, indices)
    }

    /// As [`Trainer::new`] with a given point selection.
    pub fn with_indices(config: TrainConfig, model: &'a M, indices: Vec<usize>) -> Result<Self> {
        let n = model.num_observations();
        config.validate(n)?;
        if indices.len() != config.coreset_size {
            return Err(CoresetError::DimensionMismatch { expected: config.coreset_size, actual: indices.len() });
        }
        let region = config.region.with_total(n as f64)?;
        let state = CoresetState::new(indices, init_weights(config.coreset_size, n), region, n)?;
        let ensemble = ChainEnsemble::standard_normal(config.seed, config.chains, model.dim())?;
        let optimizer = OptimizerState::new(config.optimizer, config.coreset_size);
        let subsample_rng = rng::stream(config.seed, SUBSAMPLE_STREAM);
        let mut trainer = Self::assemble(config, model, state, optimizer, ensemble, subsample_rng, 0);
        let burn_in = trainer.config.burn_in as usize;
        if burn_in > 0 {
            let diag = ensemble_step(trainer.config.kernel, &trainer.state, model, &mut trainer.ensemble, burn_in)?;
            trainer.kernel_diagnostics = diag;
        }
        trainer.push_trajectory();
        trainer.push_record();
        Ok(trainer)
    }

    fn assemble(
        config: TrainConfig,
        model: &'a M,
        state: CoresetState,
        optimizer: OptimizerState,
        ensemble: ChainEnsemble,
        subsample_rng: ChaCha8Rng,
        t: u64,
    ) -> Self {
        let n = model.num_observations();
        let s = config.subsample_for(n);
        let schedule = config.schedule_for(n);
        let w_star = if config.track_weight_error {
            model
                .as_gaussian_location()
                .and_then(|gl| exact_coreset_weights(gl, &state.indices, state.region))
        } else {
            None
        };
        Self {
            n,
            s,
            schedule,
            full_indices: if s == n { (0..n).collect() } else { Vec::new() },
            config,
            model,
            state,
            optimizer,
            ensemble,
            subsample_rng,
            t,
            trajectory: Vec::new(),
            records: Vec::new(),
            train_seconds: 0.0,
            kernel_diagnostics: KernelDiagnostics::default(),
            w_star,
        }
    }

    /// Rebuilds a trainer from a checkpoint without re-running burn-in.
    pub fn resume(checkpoint: Checkpoint, model: &'a M) -> Result<Self> {
        let n = model.num_observations();
        checkpoint.config.validate(n)?;
        checkpoint.state.validate(n)?;
        let ensemble = ChainEnsemble::restore(checkpoint.chain_states, &checkpoint.chain_streams)?;
        let mut trainer = Self::assemble(
            checkpoint.config,
            model,
            checkpoint.state,
            checkpoint.optimizer,
            ensemble,
            checkpoint.subsample_stream.restore(),
            checkpoint.iteration,
        );
        trainer.trajectory = checkpoint.trajectory;
        trainer.records = checkpoint.records;
        trainer.train_seconds = checkpoint.train_seconds;
        Ok(trainer)
    }

    pub fn checkpoint(&self) -> Checkpoint {
        Checkpoint {
            config: self.config.clone(),
            iteration: self.t,
            state: self.state.clone(),
            optimizer: self.optimizer.clone(),
            chain_states: self.ensemble.states.clone(),
            chain_streams: self.ensemble.stream_states(),
            subsample_stream: StreamState::capture(&self.subsample_rng),
            trajectory: self.trajectory.clone(),
            records: self.records.clone(),
            train_seconds: self.train_seconds,
        }
    }

    pub fn iteration(&self) -> u64 {
        self.t
    }

    pub fn state(&self) -> &CoresetState {
        &self.state
    }

    pub fn ensemble(&self) -> &ChainEnsemble {
        &self.ensemble
    }

    pub fn config(&self) -> &TrainConfig {
        &self.config
    }

    pub fn records(&self) -> &[MetricsRecord] {
        &self.records
    }

    pub fn is_done(&self) -> bool {
        self.t >= self.config.iterations
    }

    /// One adaptation iteration.
    pub fn step(&mut self) -> Result<()> {
        let start = Instant::now();
        let drawn;
        let subsample: &[usize] = if self.s == self.n {
            &self.full_indices
        } else {
            drawn = subsample_indices(self.n, self.s, &mut self.subsample_rng)?;
            &drawn
        };
        let centered = center_logliks(self.model, &self.state.indices, subsample, &self.ensemble.states)?;
        let g = estimate_gradient(&self.state.weights, &centered, self.n, self.s)?;
        self.optimizer.step(&mut self.state.weights, &g.g, &self.schedule, &self.state.region)?;
        let diag = ensemble_step(self.config.kernel, &self.state, self.model, &mut self.ensemble, self.config.kernel_steps)?;
        self.t += 1;
        self.train_seconds += start.elapsed().as_secs_f64();
        self.kernel_diagnostics.merge(&diag);

        if self.t % self.config.stride() == 0 || self.t == self.config.iterations {
            self.push_trajectory();
        }
        if self.t % self.config.metric_every == 0 || self.t == self.config.iterations {
            self.push_record();
        }
        Ok(())
    }

    /// Runs the remaining iterations up to T.
    pub fn run(&mut self) -> Result<()> {
        while !self.is_done() {
            self.step()?;
        }
        Ok(())
    }

    /// Runs up to (and excluding) iteration `t`, for checkpoint splits.
    pub fn run_until(&mut self, t: u64) -> Result<()> {
        while self.t < t.min(self.config.iterations) {
            self.step()?;
        }
        Ok(())
    }

    fn push_trajectory(&mut self) {
        if self.trajectory.last().is_some_and(|p| p.iteration == self.t) {
            return;
        }
        self.trajectory.push(TrajectoryPoint { iteration: self.t, weights: self.state.weights.clone() });
    }

    fn push_record(&mut self) {
        if self.records.last().is_some_and(|r| r.iteration == self.t) {
            return;
        }
        let exact_kl = self.model.as_gaussian_location().map(|gl| gaussian_location_kl(&self.state, gl));
        let weight_error_sq = self
            .w_star
            .as_ref()
            .map(|ws| ws.iter().zip(&self.state.weights).map(|(a, b)| (a - b) * (a - b)).sum());
        self.records.push(MetricsRecord {
            iteration: self.t,
            exact_kl,
            weight_error_sq,
            wall_clock: self.train_seconds,
            cost_proxy: self.config.cost_proxy(self.n, self.t),
            ..Default::default()
        });
    }

    /// Freezes the weights and runs every chain for
    /// ⌈n_draws/K⌉·thinning further steps, keeping every `thinning`-th state.
    pub fn sample(&mut self, n_draws: usize, thinning: usize) -> Result<Samples> {
        if thinning == 0 {
            return Err(CoresetError::InvalidArgument("thinning must be positive".into()));
        }
        let k = self.ensemble.len();
        let per_chain = n_draws.div_ceil(k);
        let mut chains = vec![Vec::with_capacity(per_chain); k];
        let start = Instant::now();
        let mut kernel_steps = 0;
        for _ in 0..per_chain {
            let diag = ensemble_step(self.config.kernel, &self.state, self.model, &mut self.ensemble, thinning)?;
            kernel_steps += diag.steps;
            for (c, theta) in chains.iter_mut().zip(&self.ensemble.states) {
                c.push(theta.clone());
            }
        }
        Ok(Samples { chains, kernel_steps, seconds: start.elapsed().as_secs_f64() })
    }

    pub fn into_result(self) -> TrainResult {
        TrainResult {
            state: self.state,
            trajectory: self.trajectory,
            records: self.records,
            chain_states: self.ensemble.states,
            iterations_completed: self.t,
            kernel_diagnostics: self.kernel_diagnostics,
            train_seconds: self.train_seconds,
        }
    }
}

/// Runs a full training from scratch. Setup errors carry an empty partial
/// result at iteration 0.
pub fn train<M: Model + ?Sized>(config: &TrainConfig, model: &M) -> std::result::Result<TrainResult, TrainFailure> {
    let mut trainer = Trainer::new(config.clone(), model).map_err(|error| TrainFailure {
        iteration: 0,
        error,
        partial: Box::new(TrainResult {
            state: CoresetState {
                indices: Vec::new(),
                weights: Vec::new(),
                region: crate::coreset::FeasibleRegion::Nonneg,
            },
            trajectory: Vec::new(),
            records: Vec::new(),
            chain_states: Vec::new(),
            iterations_completed: 0,
            kernel_diagnostics: KernelDiagnostics::default(),
            train_seconds: 0.0,
        }),
    })?;
    drive(&mut trainer)?;
    Ok(trainer.into_result())
}

/// Runs an existing trainer to completion, packaging failures with the
/// partial result.
pub fn drive<M: Model + ?Sized>(trainer: &mut Trainer<'_, M>) -> std::result::Result<(), TrainFailure> {
    if let Err(error) = trainer.run() {
        let iteration = trainer.iteration();
        let snapshot = trainer.checkpoint();
        let partial = TrainResult {
            state: snapshot.state,
            trajectory: snapshot.trajectory,
            records: snapshot.records,
            chain_states: snapshot.chain_states,
            iterations_completed: iteration,
            kernel_diagnostics: trainer.kernel_diagnostics,
            train_seconds: snapshot.train_seconds,
        };
        return Err(TrainFailure { iteration, error, partial: Box::new(partial) });
    }
    Ok(())
}
