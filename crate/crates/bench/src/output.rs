//! Output records and the tidy summary table.
//!
//! Deterministic quantities go to `records.jsonl`; anything measured with a
//! clock goes to `timing.jsonl`, so reruns can be compared byte for byte.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use coreset_mcmc::numeric::quartiles;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::error::Result;

/// One metric evaluation point of one replicate.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RecordLine {
    pub method: String,
    pub sweep_var: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sweep_value: Option<f64>,
    pub replicate: usize,
    pub seed: u64,
    pub iteration: u64,
    pub cost_proxy: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub exact_kl: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub two_moment_kl: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rel_mean_err: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rel_cov_err: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub weight_error_sq: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub min_ess: Option<f64>,
}

impl RecordLine {
    /// Present metrics by name, in a fixed order.
    pub fn metrics(&self) -> Vec<(&'static str, f64)> {
        [
            ("exact_kl", self.exact_kl),
            ("two_moment_kl", self.two_moment_kl),
            ("rel_mean_err", self.rel_mean_err),
            ("rel_cov_err", self.rel_cov_err),
            ("weight_error_sq", self.weight_error_sq),
            ("min_ess", self.min_ess),
        ]
        .into_iter()
        .filter_map(|(k, v)| v.map(|v| (k, v)))
        .collect()
    }
}

/// Wall-clock measurements of one replicate.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TimingLine {
    pub method: String,
    pub sweep_var: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sweep_value: Option<f64>,
    pub replicate: usize,
    pub train_seconds: f64,
    pub sampling_seconds: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub min_ess_per_sec: Option<f64>,
}

/// Outcome of one replicate.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunStatus {
    pub method: String,
    pub sweep_var: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sweep_value: Option<f64>,
    pub replicate: usize,
    pub seed: u64,
    /// "ok", "diverged" or "failed".
    pub status: String,
    pub iterations_completed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub message: Option<String>,
}

/// Row of the tidy summary: quartiles across replicates.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SummaryRow {
    pub method: String,
    pub sweep_var: String,
    pub sweep_value: String,
    pub iteration: u64,
    pub cost_proxy: f64,
    pub metric_name: String,
    pub p25: f64,
    pub p50: f64,
    pub p75: f64,
}

pub fn format_sweep_value(v: Option<f64>) -> String {
    v.map(|v| v.to_string()).unwrap_or_default()
}

/// Groups records by (method, sweep variable, sweep value, iteration) and
/// summarizes every present metric by its quartiles across replicates.
/// Missing metrics produce no row.
pub fn emit_plot_data(records: &[RecordLine]) -> Vec<SummaryRow> {
    type Key = (String, String, String, u64);
    let mut order: Vec<Key> = Vec::new();
    let mut groups: BTreeMap<Key, (f64, BTreeMap<&'static str, Vec<f64>>)> = BTreeMap::new();
    for r in records {
        let key = (r.method.clone(), r.sweep_var.clone(), format_sweep_value(r.sweep_value), r.iteration);
        let entry = groups.entry(key.clone()).or_insert_with(|| {
            order.push(key);
            (r.cost_proxy, BTreeMap::new())
        });
        for (name, v) in r.metrics() {
            entry.1.entry(name).or_default().push(v);
        }
    }
    let mut rows = Vec::new();
    for key in order {
        let (cost, metrics) = &groups[&key];
        for (name, values) in metrics {
            let (p25, p50, p75) = quartiles(values);
            rows.push(SummaryRow {
                method: key.0.clone(),
                sweep_var: key.1.clone(),
                sweep_value: key.2.clone(),
                iteration: key.3,
                cost_proxy: *cost,
                metric_name: name.to_string(),
                p25,
                p50,
                p75,
            });
        }
    }
    rows
}

pub fn write_summary_csv(rows: &[SummaryRow], path: impl AsRef<Path>) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    if rows.is_empty() {
        w.write_record(["method", "sweep_var", "sweep_value", "iteration", "cost_proxy", "metric_name", "p25", "p50", "p75"])?;
    }
    for row in rows {
        w.serialize(row)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_summary_csv(path: impl AsRef<Path>) -> Result<Vec<SummaryRow>> {
    let mut r = csv::Reader::from_path(path)?;
    Ok(r.deserialize().collect::<std::result::Result<_, _>>()?)
}

pub fn write_jsonl<T: Serialize>(items: &[T], path: impl AsRef<Path>) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    for item in items {
        serde_json::to_writer(&mut w, item)?;
        w.write_all(b"\n")?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_jsonl<T: DeserializeOwned>(path: impl AsRef<Path>) -> Result<Vec<T>> {
    let reader = BufReader::new(File::open(path)?);
    let mut out = Vec::new();
    for line in reader.lines() {
        let line = line?;
        if !line.trim().is_empty() {
            out.push(serde_json::from_str(&line)?);
        }
    }
    Ok(out)
}
