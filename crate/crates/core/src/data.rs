//! Datasets, synthetic generators, and CSV ingestion.

use std::fs::File;
use std::io::Write;
use std::path::Path;

use rand::Rng;
use rand_distr::{Bernoulli, Distribution, Poisson, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{CoresetError, Result};
use crate::model::{softplus, ModelKind};
use crate::rng;

/// N observations of p features plus one response each.
///
/// Features are stored row-major. For the Gaussian location model the
/// features are the observations themselves and the responses are unused
/// (kept at zero).
#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    features: Vec<f64>,
    responses: Vec<f64>,
    n: usize,
    p: usize,
}

impl Dataset {
    pub fn new(features: Vec<f64>, responses: Vec<f64>, p: usize) -> Result<Self> {
        if p == 0 {
            return Err(CoresetError::Data("feature dimension must be positive".into()));
        }
        let n = responses.len();
        if n == 0 {
            return Err(CoresetError::Data("dataset must contain at least one row".into()));
        }
        if features.len() != n * p {
            return Err(CoresetError::Data(format!(
                "feature buffer holds {} values, expected {n}x{p}",
                features.len()
            )));
        }
        if let Some(pos) = features.iter().position(|v| !v.is_finite()) {
            return Err(CoresetError::Data(format!("non-finite feature in row {}", pos / p)));
        }
        if let Some(row) = responses.iter().position(|v| !v.is_finite()) {
            return Err(CoresetError::Data(format!("non-finite response in row {row}")));
        }
        Ok(Self { features, responses, n, p })
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    pub fn num_features(&self) -> usize {
        self.p
    }

    #[inline]
    pub fn row(&self, n: usize) -> &[f64] {
        &self.features[n * self.p..(n + 1) * self.p]
    }

    #[inline]
    pub fn response(&self, n: usize) -> f64 {
        self.responses[n]
    }

    pub fn responses(&self) -> &[f64] {
        &self.responses
    }

    pub fn features(&self) -> &[f64] {
        &self.features
    }

    /// Binary class labels (`y == 1`), used for stratified coreset selection.
    pub fn class_labels(&self) -> Vec<bool> {
        self.responses.iter().map(|&y| y == 1.0).collect()
    }

    /// Checks that the responses lie in the domain of `kind`.
    pub fn check_domain(&self, kind: ModelKind) -> Result<()> {
        let bad = match kind {
            ModelKind::GaussianLocation | ModelKind::LinearRegression => None,
            ModelKind::LogisticRegression => {
                self.responses.iter().position(|&y| y != 0.0 && y != 1.0)
            }
            ModelKind::PoissonRegression => self
                .responses
                .iter()
                .position(|&y| y < 0.0 || y.fract() != 0.0),
        };
        match bad {
            Some(row) => Err(CoresetError::Data(format!(
                "response {} in row {row} outside the {kind} domain",
                self.responses[row]
            ))),
            None => Ok(()),
        }
    }
}

/// Ground truth behind a synthetic dataset, emitted as a JSON-lines sidecar.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SyntheticTruth {
    pub kind: ModelKind,
    pub n: usize,
    pub p: usize,
    pub seed: u64,
    pub parameter: Vec<f64>,
}

impl SyntheticTruth {
    pub fn write_jsonl(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut f = File::create(path)?;
        serde_json::to_writer(&mut f, self)?;
        writeln!(f)?;
        Ok(())
    }
}

/// Draws a synthetic dataset for `kind`.
///
/// * Gaussian location: θ⋆ ~ N(0, I_p), X_n ~ N(θ⋆, I_p).
/// * Regressions: x_n ~ N(0, I_p) and responses from the model at a
///   ground-truth parameter drawn from N(0, I). For linear regression the
///   parameter is (β, log σ²) with β of length p + 1.
pub fn generate_synthetic(
    kind: ModelKind,
    n: usize,
    p: usize,
    seed: u64,
) -> Result<(Dataset, SyntheticTruth)> {
    if n == 0 || p == 0 {
        return Err(CoresetError::InvalidArgument("synthetic data needs N >= 1 and p >= 1".into()));
    }
    let mut rng = rng::stream(seed, rng::DATA_STREAM);
    let dim = kind.parameter_dim(p);
    let truth: Vec<f64> = (0..dim).map(|_| rng.sample(StandardNormal)).collect();

    let mut features = Vec::with_capacity(n * p);
    let mut responses = Vec::with_capacity(n);
    for _ in 0..n {
        let start = features.len();
        match kind {
            ModelKind::GaussianLocation => {
                for j in 0..p {
                    let z: f64 = rng.sample(StandardNormal);
                    features.push(truth[j] + z);
                }
                responses.push(0.0);
            }
            _ => {
                for _ in 0..p {
                    features.push(rng.sample(StandardNormal));
                }
                let x = &features[start..];
                let eta = truth[0] + x.iter().zip(&truth[1..=p]).map(|(a, b)| a * b).sum::<f64>();
                let y = match kind {
                    ModelKind::LinearRegression => {
                        let sd = (0.5 * truth[p + 1]).exp();
                        let z: f64 = rng.sample(StandardNormal);
                        eta + sd * z
                    }
                    ModelKind::LogisticRegression => {
                        let prob = 1.0 / (1.0 + (-eta).exp());
                        let b = Bernoulli::new(prob).expect("probability in [0, 1]");
                        if b.sample(&mut rng) {
                            1.0
                        } else {
                            0.0
                        }
                    }
                    ModelKind::PoissonRegression => {
                        let rate = softplus(eta);
                        if rate > 0.0 {
                            Poisson::new(rate).expect("positive rate").sample(&mut rng)
                        } else {
                            0.0
                        }
                    }
                    ModelKind::GaussianLocation => unreachable!(),
                };
                responses.push(y);
            }
        }
    }
    let data = Dataset::new(features, responses, p)?;
    let truth = SyntheticTruth { kind, n, p, seed, parameter: truth };
    Ok((data, truth))
}

/// Reads a CSV file with a header row. The column named `y` is the response
/// and every other column is a numeric feature, kept in file order.
pub fn load_csv(path: impl AsRef<Path>, kind: ModelKind) -> Result<Dataset> {
    let mut reader = csv::ReaderBuilder::new().has_headers(true).from_path(path)?;
    let headers = reader.headers()?.clone();
    let y_col = headers
        .iter()
        .position(|h| h.trim() == "y")
        .ok_or_else(|| CoresetError::Parse { line: 1, message: "missing `y` column".into() })?;
    let p = headers.len() - 1;
    if p == 0 {
        return Err(CoresetError::Parse { line: 1, message: "no feature columns".into() });
    }
    let mut features = Vec::new();
    let mut responses = Vec::new();
    for (i, record) in reader.records().enumerate() {
        let line = i + 2;
        let record = record?;
        if record.len() != headers.len() {
            return Err(CoresetError::Parse {
                line,
                message: format!("expected {} fields, found {}", headers.len(), record.len()),
            });
        }
        for (j, field) in record.iter().enumerate() {
            let value: f64 = field.trim().parse().map_err(|_| CoresetError::Parse {
                line,
                message: format!("cannot parse `{field}` as a number"),
            })?;
            if !value.is_finite() {
                return Err(CoresetError::Parse {
                    line,
                    message: format!("non-finite value `{field}`"),
                });
            }
            if j == y_col {
                responses.push(value);
            } else {
                features.push(value);
            }
        }
    }
    let data = Dataset::new(features, responses, p)?;
    data.check_domain(kind)?;
    Ok(data)
}

/// Writes `data` in the format read by [`load_csv`]: features `x1..xp`
/// followed by `y`. Values use Rust's shortest round-trip formatting.
pub fn write_csv(data: &Dataset, path: impl AsRef<Path>) -> Result<()> {
    let mut writer = csv::Writer::from_path(path)?;
    let mut header: Vec<String> = (1..=data.p).map(|j| format!("x{j}")).collect();
    header.push("y".into());
    writer.write_record(&header)?;
    for n in 0..data.n {
        let mut row: Vec<String> = data.row(n).iter().map(|v| v.to_string()).collect();
        row.push(data.response(n).to_string());
        writer.write_record(&row)?;
    }
    writer.flush()?;
    Ok(())
}
