//! Running replicates, sweeps and the uniform baseline.

use std::fs;
use std::path::Path;

use coreset_mcmc::coreset::{select_points, CoresetState, FeasibleRegion};
use coreset_mcmc::data::{generate_synthetic, load_csv};
use coreset_mcmc::kernels::{ensemble_step, ChainEnsemble};
use coreset_mcmc::metrics::{min_bulk_ess, relative_errors, two_moment_kl, MomentSummary};
use coreset_mcmc::model::{BuiltinModel, Model, ModelKind};
use coreset_mcmc::rng::{self, SELECT_STREAM};
use coreset_mcmc::trainer::{drive, Trainer};
use coreset_mcmc::CoresetError;
use rayon::prelude::*;

use crate::error::{BenchError, Result};
use crate::output::{emit_plot_data, write_jsonl, write_summary_csv, RecordLine, RunStatus, SummaryRow, TimingLine};
use crate::spec::{DataSpec, ExperimentSpec, Method, ReferenceSpec};

/// Builds the model for a data specification.
pub fn load_model(spec: &DataSpec) -> Result<BuiltinModel> {
    let data = match &spec.csv {
        Some(path) => load_csv(path, spec.model)?,
        None => generate_synthetic(spec.model, spec.n, spec.p, spec.seed)?.0,
    };
    Ok(BuiltinModel::new(spec.model, data)?)
}

/// Reference posterior moments: exact for the Gaussian location model,
/// otherwise from a long full-data run of the reference kernel.
pub fn reference_moments(model: &BuiltinModel, spec: &ReferenceSpec, draws: usize) -> Result<MomentSummary> {
    if let Some(gl) = model.as_gaussian_location() {
        return Ok(MomentSummary::from_posterior(&gl.full_posterior()));
    }
    let n = model.num_observations();
    let full = CoresetState { indices: (0..n).collect(), weights: vec![1.0; n], region: FeasibleRegion::Nonneg };
    let chains = spec.chains.max(2);
    let mut ensemble = ChainEnsemble::standard_normal(spec.seed, chains, model.dim())?;
    ensemble_step(spec.kernel, &full, model, &mut ensemble, spec.burn_in)?;
    let per_chain = draws.div_ceil(chains);
    let mut rows = Vec::with_capacity(per_chain * chains);
    for _ in 0..per_chain {
        ensemble_step(spec.kernel, &full, model, &mut ensemble, 1)?;
        rows.extend(ensemble.states.iter().cloned());
    }
    Ok(MomentSummary::from_draws(&rows)?)
}

/// Everything one replicate produces.
#[derive(Clone, Debug)]
pub struct ReplicateOutput {
    pub records: Vec<RecordLine>,
    pub timing: TimingLine,
    pub status: RunStatus,
    pub final_state: Option<CoresetState>,
}

impl ReplicateOutput {
    pub fn diverged(&self) -> bool {
        self.status.status == "diverged"
    }

    /// The last record (the end of training, with sampling metrics).
    pub fn final_record(&self) -> Option<&RecordLine> {
        self.records.last()
    }
}

/// Shared inputs of all replicates of an experiment.
pub struct Context {
    pub model: BuiltinModel,
    pub labels: Option<Vec<bool>>,
    pub reference: Option<MomentSummary>,
}

impl Context {
    /// Loads the data and, when sampling is enabled, computes the
    /// reference moments once.
    pub fn prepare(spec: &ExperimentSpec) -> Result<Self> {
        let model = load_model(&spec.data)?;
        let labels = (spec.stratify && spec.data.model == ModelKind::LogisticRegression)
            .then(|| model.data().class_labels());
        let reference = if spec.sampling.draws > 0 {
            Some(reference_moments(&model, &spec.reference, spec.reference_draws())?)
        } else {
            None
        };
        Ok(Self { model, labels, reference })
    }
}

fn is_divergence(e: &CoresetError) -> bool {
    matches!(
        e,
        CoresetError::Divergence(_) | CoresetError::NonFiniteGradient(_) | CoresetError::NonFiniteLogDensity { .. }
    )
}

/// Trains (or, for the baseline, only initializes) one replicate, samples
/// with frozen weights and evaluates the metrics.
pub fn run_replicate(
    spec: &ExperimentSpec,
    method: Method,
    ctx: &Context,
    sweep_var: &str,
    sweep_value: Option<f64>,
    replicate: usize,
) -> Result<ReplicateOutput> {
    let n = ctx.model.num_observations();
    let mut config = spec.train.clone();
    if let (Some(sweep), Some(v)) = (&spec.sweep, sweep_value) {
        sweep.var.apply(&mut config, v, n)?;
    }
    let seed = spec.replicate_seed(replicate);
    config.seed = seed;
    if method == Method::Unif {
        config.iterations = 0;
    }
    config.validate(n).map_err(|e| BenchError::Config(e.to_string()))?;
    let mut select_rng = rng::stream(seed, SELECT_STREAM);
    let indices = select_points(n, config.coreset_size, ctx.labels.as_deref(), &mut select_rng)?;

    let mut status = RunStatus {
        method: method.label().into(),
        sweep_var: sweep_var.into(),
        sweep_value,
        replicate,
        seed,
        status: "ok".into(),
        iterations_completed: 0,
        message: None,
    };
    let mut timing = TimingLine {
        method: method.label().into(),
        sweep_var: sweep_var.into(),
        sweep_value,
        replicate,
        train_seconds: 0.0,
        sampling_seconds: 0.0,
        min_ess_per_sec: None,
    };

    let mut trainer = Trainer::with_indices(config.clone(), &ctx.model, indices)?;
    let outcome = drive(&mut trainer);
    let mut records: Vec<RecordLine> = Vec::new();
    let to_line = |m: &coreset_mcmc::metrics::MetricsRecord| RecordLine {
        method: method.label().into(),
        sweep_var: sweep_var.into(),
        sweep_value,
        replicate,
        seed,
        iteration: m.iteration,
        cost_proxy: m.cost_proxy,
        exact_kl: m.exact_kl,
        two_moment_kl: None,
        rel_mean_err: None,
        rel_cov_err: None,
        weight_error_sq: m.weight_error_sq,
        min_ess: None,
    };
    match outcome {
        Err(failure) => {
            status.status = if is_divergence(&failure.error) { "diverged" } else { "failed" }.into();
            status.message = Some(failure.error.to_string());
            status.iterations_completed = failure.iteration;
            timing.train_seconds = failure.partial.train_seconds;
            records.extend(failure.partial.records.iter().map(to_line));
            return Ok(ReplicateOutput { records, timing, status, final_state: Some(failure.partial.state) });
        }
        Ok(()) => {
            status.iterations_completed = trainer.iteration();
            records.extend(trainer.records().iter().map(to_line));
        }
    }

    if spec.sampling.draws > 0 {
        match trainer.sample(spec.sampling.draws, spec.sampling.thinning) {
            Ok(samples) => {
                timing.sampling_seconds = samples.seconds;
                let rows = samples.rows(spec.sampling.draws);
                let hat = MomentSummary::from_draws(&rows)?;
                let last = records.last_mut().expect("a record at the end of training");
                if let Some(reference) = &ctx.reference {
                    last.two_moment_kl = Some(two_moment_kl(&hat, reference)?.value);
                    if let Ok((m, c)) = relative_errors(&hat, reference) {
                        last.rel_mean_err = Some(m);
                        last.rel_cov_err = Some(c);
                    }
                }
                if samples.chains[0].len() >= 8 {
                    let ess = min_bulk_ess(&samples.chains)?;
                    last.min_ess = Some(ess);
                    if samples.seconds > 0.0 {
                        timing.min_ess_per_sec = Some(ess / samples.seconds);
                    }
                }
            }
            Err(e) => {
                status.status = if is_divergence(&e) { "diverged" } else { "failed" }.into();
                status.message = Some(format!("sampling: {e}"));
            }
        }
    }
    timing.train_seconds = trainer.records().last().map_or(0.0, |r| r.wall_clock);
    Ok(ReplicateOutput { records, timing, status, final_state: Some(trainer.state().clone()) })
}

/// All outputs of an experiment.
#[derive(Clone, Debug, Default)]
pub struct ExperimentOutcome {
    pub records: Vec<RecordLine>,
    pub timing: Vec<TimingLine>,
    pub statuses: Vec<RunStatus>,
    pub summary: Vec<SummaryRow>,
}

impl ExperimentOutcome {
    pub fn diverged(&self) -> usize {
        self.statuses.iter().filter(|s| s.status == "diverged").count()
    }

    pub fn failed(&self) -> usize {
        self.statuses.iter().filter(|s| s.status == "failed").count()
    }

    /// Writes `records.jsonl`, `timing.jsonl`, `runs.jsonl` and `summary.csv`.
    pub fn write(&self, dir: impl AsRef<Path>) -> Result<()> {
        let dir = dir.as_ref();
        fs::create_dir_all(dir)?;
        write_jsonl(&self.records, dir.join("records.jsonl"))?;
        write_jsonl(&self.timing, dir.join("timing.jsonl"))?;
        write_jsonl(&self.statuses, dir.join("runs.jsonl"))?;
        write_summary_csv(&self.summary, dir.join("summary.csv"))?;
        Ok(())
    }
}

fn with_threads<T: Send>(threads: Option<usize>, f: impl FnOnce() -> T + Send) -> Result<T> {
    match threads {
        Some(n) => {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(n)
                .build()
                .map_err(|e| BenchError::Config(format!("thread pool: {e}")))?;
            Ok(pool.install(f))
        }
        None => Ok(f()),
    }
}

fn run_method(spec: &ExperimentSpec, method: Method, ctx: &Context, threads: Option<usize>) -> Result<ExperimentOutcome> {
    let (var, points) = spec.sweep_points();
    let jobs: Vec<(Option<f64>, usize)> =
        points.iter().flat_map(|&v| (0..spec.replicates).map(move |r| (v, r))).collect();
    let outputs: Vec<Result<ReplicateOutput>> = with_threads(threads, || {
        jobs.par_iter().map(|&(v, r)| run_replicate(spec, method, ctx, &var, v, r)).collect()
    })?;
    let mut outcome = ExperimentOutcome::default();
    for out in outputs {
        let out = out?;
        outcome.records.extend(out.records);
        outcome.timing.push(out.timing);
        outcome.statuses.push(out.status);
    }
    outcome.summary = emit_plot_data(&outcome.records);
    Ok(outcome)
}

/// Runs every sweep point × replicate with the spec's method.
pub fn run_experiment(spec: &ExperimentSpec, threads: Option<usize>) -> Result<ExperimentOutcome> {
    let ctx = Context::prepare(spec)?;
    run_method(spec, spec.method, &ctx, threads)
}

/// As [`run_experiment`] with no adaptation: weights stay at N/M.
pub fn run_unif_baseline(spec: &ExperimentSpec, threads: Option<usize>) -> Result<ExperimentOutcome> {
    let ctx = Context::prepare(spec)?;
    run_method(spec, Method::Unif, &ctx, threads)
}

/// Runs an experiment with an already prepared context.
pub fn run_with_context(
    spec: &ExperimentSpec,
    method: Method,
    ctx: &Context,
    threads: Option<usize>,
) -> Result<ExperimentOutcome> {
    run_method(spec, method, ctx, threads)
}
