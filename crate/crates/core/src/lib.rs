//! Coreset MCMC.
//!
//! Builds a Bayesian coreset, a small weighted subset of the data whose
//! weighted log-likelihood stands in for the full-data log-likelihood, by
//! interleaving two updates:
//!
//! 1. a projected stochastic-gradient step on the weights, with the KL
//!    gradient estimated from `K ≥ 2` Markov chains (and optionally a data
//!    subsample), and
//! 2. one transition of each chain under a kernel that targets the current
//!    coreset posterior.
//!
//! The Gaussian location model has a closed-form coreset posterior, so the
//! exact KL, the analytic gradient and exact coreset weights are available
//! for validating the stochastic machinery.
//!
//! ```
//! use coreset_mcmc::prelude::*;
//!
//! let (data, _) = generate_synthetic(ModelKind::GaussianLocation, 500, 3, 1).unwrap();
//! let model = GaussianLocation::new(data);
//! let config = TrainConfig {
//!     iterations: 50,
//!     chains: 4,
//!     coreset_size: 10,
//!     region: RegionKind::HyperplaneSumN,
//!     kernel: KernelFamily::GaussianAr { beta: 0.5 },
//!     ..TrainConfig::gaussian_defaults(500)
//! };
//! let result = train(&config, &model).unwrap();
//! let first = result.records.first().unwrap().exact_kl.unwrap();
//! let last = result.records.last().unwrap().exact_kl.unwrap();
//! assert!(last < first);
//! ```

pub mod coreset;
pub mod data;
pub mod error;
pub mod ess;
pub mod grad;
pub mod kernels;
pub mod metrics;
pub mod model;
pub mod numeric;
pub mod optimizer;
pub mod rng;
pub mod slice;
pub mod trainer;

pub use error::{CoresetError, Result};

pub mod prelude {
    pub use crate::coreset::{init_weights, select_points, CoresetState, FeasibleRegion, RegionKind};
    pub use crate::data::{generate_synthetic, load_csv, write_csv, Dataset, SyntheticTruth};
    pub use crate::error::{CoresetError, Result};
    pub use crate::kernels::{ChainEnsemble, KernelFamily};
    pub use crate::metrics::{MetricsRecord, MomentSummary};
    pub use crate::model::{
        BuiltinModel, GaussianLocation, LinearRegression, LogisticRegression, Model, ModelKind,
        PoissonRegression,
    };
    pub use crate::optimizer::{OptimizerConfig, OptimizerKind, Schedule};
    pub use crate::trainer::{train, TrainConfig, TrainResult, Trainer};
}
