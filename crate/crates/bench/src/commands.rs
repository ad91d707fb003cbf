//! Implementations of the CLI subcommands.

use std::fs;
use std::path::Path;

use coreset_mcmc::coreset::select_points;
use coreset_mcmc::metrics::{min_bulk_ess, relative_errors, two_moment_kl, MomentSummary};
use coreset_mcmc::model::{Model, ModelKind};
use coreset_mcmc::rng::{self, SELECT_STREAM};
use coreset_mcmc::trainer::{drive, Checkpoint, Trainer};
use serde::Serialize;

use crate::error::Result;
use crate::experiment::{load_model, reference_moments, run_with_context, Context, ExperimentOutcome};
use crate::output::{emit_plot_data, read_jsonl, write_jsonl, write_summary_csv, RecordLine, RunStatus};
use crate::spec::{ExperimentSpec, Method};

pub const EXIT_OK: i32 = 0;
pub const EXIT_FAILURE: i32 = 1;
pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_DIVERGENCE: i32 = 3;

fn exit_code(outcome: &ExperimentOutcome) -> i32 {
    if outcome.diverged() > 0 {
        EXIT_DIVERGENCE
    } else if outcome.failed() > 0 {
        EXIT_FAILURE
    } else {
        EXIT_OK
    }
}

/// `sweep` and `baseline`: every sweep point × replicate.
pub fn sweep(spec: &ExperimentSpec, method: Method, out: &Path, threads: Option<usize>) -> Result<i32> {
    let ctx = Context::prepare(spec)?;
    let outcome = run_with_context(spec, method, &ctx, threads)?;
    outcome.write(out)?;
    fs::write(out.join("spec.json"), serde_json::to_vec_pretty(spec)?)?;
    Ok(exit_code(&outcome))
}

/// `train`: a single run with seed `base_seed`, leaving a checkpoint and
/// the final weights behind.
pub fn train(spec: &ExperimentSpec, out: &Path) -> Result<i32> {
    fs::create_dir_all(out)?;
    let model = load_model(&spec.data)?;
    let n = model.num_observations();
    let mut config = spec.train.clone();
    config.seed = spec.base_seed;
    let labels =
        (spec.stratify && spec.data.model == ModelKind::LogisticRegression).then(|| model.data().class_labels());
    let mut select_rng = rng::stream(config.seed, SELECT_STREAM);
    let indices = select_points(n, config.coreset_size, labels.as_deref(), &mut select_rng)?;
    let mut trainer = Trainer::with_indices(config, &model, indices)?;
    let result = drive(&mut trainer);

    let method = Method::CoresetMcmc.label();
    let records: Vec<RecordLine> = trainer
        .records()
        .iter()
        .map(|m| RecordLine {
            method: method.into(),
            sweep_var: "none".into(),
            sweep_value: None,
            replicate: 0,
            seed: spec.base_seed,
            iteration: m.iteration,
            cost_proxy: m.cost_proxy,
            exact_kl: m.exact_kl,
            two_moment_kl: None,
            rel_mean_err: None,
            rel_cov_err: None,
            weight_error_sq: m.weight_error_sq,
            min_ess: None,
        })
        .collect();
    let (status, message, code) = match &result {
        Ok(()) => ("ok", None, EXIT_OK),
        Err(f) => match f.error {
            coreset_mcmc::CoresetError::Divergence(_)
            | coreset_mcmc::CoresetError::NonFiniteGradient(_)
            | coreset_mcmc::CoresetError::NonFiniteLogDensity { .. } => ("diverged", Some(f.to_string()), EXIT_DIVERGENCE),
            _ => ("failed", Some(f.to_string()), EXIT_FAILURE),
        },
    };
    write_jsonl(&records, out.join("records.jsonl"))?;
    write_jsonl(
        &[RunStatus {
            method: method.into(),
            sweep_var: "none".into(),
            sweep_value: None,
            replicate: 0,
            seed: spec.base_seed,
            status: status.into(),
            iterations_completed: trainer.iteration(),
            message,
        }],
        out.join("runs.jsonl"),
    )?;
    write_summary_csv(&emit_plot_data(&records), out.join("summary.csv"))?;
    #[derive(Serialize)]
    struct Timing {
        train_seconds: f64,
    }
    write_jsonl(
        &[Timing { train_seconds: trainer.records().last().map_or(0.0, |r| r.wall_clock) }],
        out.join("timing.jsonl"),
    )?;
    trainer.state().write_weights_csv(out.join("weights.csv"))?;
    trainer.checkpoint().save(out.join("checkpoint.json"))?;
    Ok(code)
}

#[derive(Serialize)]
struct SampleMetrics {
    draws: usize,
    kernel_steps: u64,
    seconds: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    two_moment_kl: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    rel_mean_err: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    rel_cov_err: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    min_ess: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    min_ess_per_sec: Option<f64>,
}

/// `sample`: resumes a checkpoint, freezes the weights and draws samples.
pub fn sample(spec: &ExperimentSpec, checkpoint: &Path, out: &Path) -> Result<i32> {
    fs::create_dir_all(out)?;
    let model = load_model(&spec.data)?;
    let ckpt = Checkpoint::load(checkpoint)?;
    let mut trainer = Trainer::resume(ckpt, &model)?;
    let samples = match trainer.sample(spec.sampling.draws.max(1), spec.sampling.thinning) {
        Ok(s) => s,
        Err(e) => {
            eprintln!("sampling failed: {e}");
            return Ok(EXIT_DIVERGENCE);
        }
    };
    let rows = samples.rows(spec.sampling.draws.max(1));
    let mut w = csv::Writer::from_path(out.join("draws.csv"))?;
    let d = model.dim();
    w.write_record((1..=d).map(|j| format!("theta{j}")))?;
    for row in &rows {
        w.write_record(row.iter().map(|v| v.to_string()))?;
    }
    w.flush()?;

    let mut metrics = SampleMetrics {
        draws: rows.len(),
        kernel_steps: samples.kernel_steps,
        seconds: samples.seconds,
        two_moment_kl: None,
        rel_mean_err: None,
        rel_cov_err: None,
        min_ess: None,
        min_ess_per_sec: None,
    };
    if rows.len() >= 2 {
        let hat = MomentSummary::from_draws(&rows)?;
        let reference = reference_moments(&model, &spec.reference, spec.reference_draws())?;
        metrics.two_moment_kl = Some(two_moment_kl(&hat, &reference)?.value);
        if let Ok((m, c)) = relative_errors(&hat, &reference) {
            metrics.rel_mean_err = Some(m);
            metrics.rel_cov_err = Some(c);
        }
    }
    if samples.chains[0].len() >= 8 {
        let ess = min_bulk_ess(&samples.chains)?;
        metrics.min_ess = Some(ess);
        metrics.min_ess_per_sec = (samples.seconds > 0.0).then(|| ess / samples.seconds);
    }
    fs::write(out.join("sample_metrics.json"), serde_json::to_vec_pretty(&metrics)?)?;
    Ok(EXIT_OK)
}

/// `metrics`: recomputes the summary table from a records file.
pub fn metrics(records: &Path, out: &Path) -> Result<i32> {
    fs::create_dir_all(out)?;
    let recs: Vec<RecordLine> = read_jsonl(records)?;
    write_summary_csv(&emit_plot_data(&recs), out.join("summary.csv"))?;
    Ok(EXIT_OK)
}
