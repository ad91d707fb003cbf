//! Experiment harness for Coreset MCMC: declarative TOML specs, replicated
//! runs and sweeps, the uniform-subsampling baseline, and JSON-lines / CSV
//! outputs.

pub mod commands;
pub mod error;
pub mod experiment;
pub mod output;
pub mod spec;

pub use error::{BenchError, Result};
pub use experiment::{
    load_model, reference_moments, run_experiment, run_replicate, run_unif_baseline, Context, ExperimentOutcome,
    ReplicateOutput,
};
pub use output::{emit_plot_data, RecordLine, SummaryRow};
pub use spec::{ExperimentSpec, Method};
