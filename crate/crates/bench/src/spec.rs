//! Experiment specification files.
//!
//! A spec is a TOML document. Only `[data]` is required; `[train]` keys
//! override defaults that depend on the model: the Gaussian location study
//! uses T = 5000, K = 20, M = 30, SGD, the autoregressive kernel with
//! β = 0.8 and the sum hyperplane region; the regression models use
//! T = 10,000, K = 2, M = 100, ADAM and the hit-and-run slice sampler on
//! nonnegative weights.
//!
//! ```toml
//! name = "gaussian-k-sweep"
//! replicates = 10
//! base_seed = 1
//!
//! [data]
//! model = "gaussian_location"
//! n = 10000
//! p = 20
//!
//! [train]
//! subsample_size = 30
//!
//! [sweep]
//! var = "chains"
//! values = [2, 5, 20, 100]
//! ```

use std::fs;
use std::path::{Path, PathBuf};

use coreset_mcmc::kernels::KernelFamily;
use coreset_mcmc::model::ModelKind;
use coreset_mcmc::optimizer::{OptimizerConfig, Schedule};
use coreset_mcmc::prelude::{RegionKind, TrainConfig};
use serde::{Deserialize, Serialize};

use crate::error::{BenchError, Result};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    #[default]
    CoresetMcmc,
    /// Uniformly drawn points with weights N/M and no adaptation.
    Unif,
}

impl Method {
    pub fn label(self) -> &'static str {
        match self {
            Method::CoresetMcmc => "coreset_mcmc",
            Method::Unif => "unif",
        }
    }
}

/// Where the data come from.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DataSpec {
    pub model: ModelKind,
    /// Observation count for synthetic data.
    #[serde(default = "default_n")]
    pub n: usize,
    /// Feature count (data dimension for the Gaussian location model).
    #[serde(default = "default_p")]
    pub p: usize,
    /// Seed of the synthetic dataset, shared by all replicates.
    #[serde(default)]
    pub seed: u64,
    /// Load this CSV instead of generating synthetic data.
    #[serde(default)]
    pub csv: Option<PathBuf>,
}

fn default_n() -> usize {
    10_000
}

fn default_p() -> usize {
    5
}

/// Post-training sampling with frozen weights.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SamplingSpec {
    /// Number of draws; 0 disables sampling-based metrics.
    pub draws: usize,
    pub thinning: usize,
}

impl Default for SamplingSpec {
    fn default() -> Self {
        Self { draws: 10_000, thinning: 1 }
    }
}

/// Long full-data run providing reference moments for models without a
/// closed-form posterior.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ReferenceSpec {
    /// Number of draws; `None` means 20× the sampling draws.
    pub draws: Option<usize>,
    pub chains: usize,
    pub burn_in: usize,
    pub kernel: KernelFamily,
    pub seed: u64,
}

impl Default for ReferenceSpec {
    fn default() -> Self {
        Self { draws: None, chains: 4, burn_in: 1000, kernel: KernelFamily::hit_and_run(), seed: 0 }
    }
}

/// Training parameter varied across a sweep.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepVar {
    Chains,
    CoresetSize,
    SubsampleSize,
    Beta,
    Gamma0,
    Alpha,
    Iterations,
}

impl SweepVar {
    pub fn name(self) -> &'static str {
        match self {
            SweepVar::Chains => "chains",
            SweepVar::CoresetSize => "coreset_size",
            SweepVar::SubsampleSize => "subsample_size",
            SweepVar::Beta => "beta",
            SweepVar::Gamma0 => "gamma0",
            SweepVar::Alpha => "alpha",
            SweepVar::Iterations => "iterations",
        }
    }

    /// Applies `value` to a training configuration.
    pub fn apply(self, config: &mut TrainConfig, value: f64, n: usize) -> Result<()> {
        let as_count = |v: f64| -> Result<usize> {
            if v >= 0.0 && v.fract() == 0.0 {
                Ok(v as usize)
            } else {
                Err(BenchError::Config(format!("sweep over {} needs whole numbers, got {v}", self.name())))
            }
        };
        match self {
            SweepVar::Chains => config.chains = as_count(value)?,
            SweepVar::CoresetSize => config.coreset_size = as_count(value)?,
            SweepVar::SubsampleSize => config.subsample_size = Some(as_count(value)?),
            SweepVar::Iterations => config.iterations = as_count(value)? as u64,
            SweepVar::Beta => config.kernel = KernelFamily::GaussianAr { beta: value },
            SweepVar::Gamma0 => {
                let base = config.schedule_for(n);
                config.schedule = Some(Schedule { gamma0: value, ..base });
            }
            SweepVar::Alpha => {
                let base = config.schedule_for(n);
                config.schedule = Some(Schedule { alpha: value, ..base });
            }
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepSpec {
    pub var: SweepVar,
    pub values: Vec<f64>,
}

/// A parsed and defaulted experiment.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExperimentSpec {
    pub name: String,
    pub method: Method,
    pub data: DataSpec,
    pub train: TrainConfig,
    pub sampling: SamplingSpec,
    pub reference: ReferenceSpec,
    pub sweep: Option<SweepSpec>,
    pub replicates: usize,
    /// Replicate r trains with seed `base_seed + r`.
    pub base_seed: u64,
    pub out_dir: Option<PathBuf>,
    /// Stratify point selection by class for logistic regression.
    pub stratify: bool,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawSpec {
    #[serde(default = "default_name")]
    name: String,
    #[serde(default)]
    method: Method,
    data: DataSpec,
    #[serde(default)]
    train: toml::Table,
    #[serde(default)]
    sampling: SamplingSpec,
    #[serde(default)]
    reference: ReferenceSpec,
    #[serde(default)]
    sweep: Option<SweepSpec>,
    #[serde(default = "default_replicates")]
    replicates: usize,
    #[serde(default)]
    base_seed: u64,
    #[serde(default)]
    out_dir: Option<PathBuf>,
    #[serde(default = "default_true")]
    stratify: bool,
}

fn default_name() -> String {
    "experiment".into()
}

fn default_replicates() -> usize {
    1
}

fn default_true() -> bool {
    true
}

/// Model-dependent training defaults.
pub fn default_train_config(model: ModelKind) -> TrainConfig {
    match model {
        ModelKind::GaussianLocation => TrainConfig {
            kernel: KernelFamily::GaussianAr { beta: 0.8 },
            region: RegionKind::HyperplaneSumN,
            ..TrainConfig::new(5000, 20, 30)
        },
        _ => TrainConfig {
            optimizer: OptimizerConfig::adam(),
            schedule: Some(Schedule { gamma0: default_adam_rate(model), alpha: 1.0 }),
            ..TrainConfig::new(10_000, 2, 100)
        },
    }
}

/// ADAM step sizes tuned once on the synthetic desk-scale problems
/// (N = 10⁴, p = 5, M = 100).
pub fn default_adam_rate(model: ModelKind) -> f64 {
    match model {
        ModelKind::GaussianLocation => 1.0,
        ModelKind::LinearRegression => 1.0,
        ModelKind::LogisticRegression => 1.0,
        ModelKind::PoissonRegression => 0.1,
    }
}

impl ExperimentSpec {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let raw: RawSpec = toml::from_str(text).map_err(|e| BenchError::Config(e.to_string()))?;
        let defaults = default_train_config(raw.data.model);
        let mut table = toml::Table::try_from(&defaults).map_err(|e| BenchError::Config(e.to_string()))?;
        for (k, v) in raw.train {
            table.insert(k, v);
        }
        let train: TrainConfig =
            toml::Value::Table(table).try_into().map_err(|e: toml::de::Error| BenchError::Config(e.to_string()))?;
        let spec = Self {
            name: raw.name,
            method: raw.method,
            data: raw.data,
            train,
            sampling: raw.sampling,
            reference: raw.reference,
            sweep: raw.sweep,
            replicates: raw.replicates,
            base_seed: raw.base_seed,
            out_dir: raw.out_dir,
            stratify: raw.stratify,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn from_file(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path)
            .map_err(|e| BenchError::Config(format!("cannot read {}: {e}", path.display())))?;
        let mut spec = Self::from_toml_str(&text)?;
        // relative CSV paths are resolved against the spec file
        if let (Some(csv), Some(dir)) = (spec.data.csv.as_mut(), path.parent()) {
            if csv.is_relative() {
                *csv = dir.join(&*csv);
            }
        }
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        if self.replicates == 0 {
            return Err(BenchError::Config("replicates must be at least 1".into()));
        }
        if self.sampling.thinning == 0 {
            return Err(BenchError::Config("sampling thinning must be positive".into()));
        }
        if self.reference.chains == 0 {
            return Err(BenchError::Config("reference chains must be positive".into()));
        }
        if let Some(sweep) = &self.sweep {
            if sweep.values.is_empty() {
                return Err(BenchError::Config("sweep has no values".into()));
            }
        }
        // CSV data sizes are unknown until loading; size checks then wait for the run.
        let n = if self.data.csv.is_some() { usize::MAX } else { self.data.n };
        self.train.validate(n).map_err(|e| BenchError::Config(e.to_string()))?;
        if matches!(self.train.kernel, KernelFamily::GaussianAr { .. }) && self.data.model != ModelKind::GaussianLocation {
            return Err(BenchError::Config("the gaussian_ar kernel needs the gaussian_location model".into()));
        }
        Ok(())
    }

    /// Sweep variable and values; a spec without a sweep has one point.
    pub fn sweep_points(&self) -> (String, Vec<Option<f64>>) {
        match &self.sweep {
            Some(s) => (s.var.name().to_string(), s.values.iter().map(|&v| Some(v)).collect()),
            None => ("none".to_string(), vec![None]),
        }
    }

    pub fn replicate_seed(&self, replicate: usize) -> u64 {
        self.base_seed.wrapping_add(replicate as u64)
    }

    pub fn reference_draws(&self) -> usize {
        self.reference.draws.unwrap_or(20 * self.sampling.draws.max(500))
    }
}
