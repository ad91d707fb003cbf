//! Learning-rate schedules and projected stochastic optimizers.

use serde::{Deserialize, Serialize};

use crate::coreset::FeasibleRegion;
use crate::error::{CoresetError, Result};

/// Weights with an entry larger than this in magnitude count as diverged.
pub const DIVERGENCE_LIMIT: f64 = 1e12;

/// γ_t = gamma0 · (t+1)^(alpha−1).
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Schedule {
    pub gamma0: f64,
    pub alpha: f64,
}

impl Schedule {
    pub fn new(gamma0: f64, alpha: f64) -> Result<Self> {
        if !(gamma0 > 0.0 && gamma0.is_finite()) {
            return Err(CoresetError::InvalidArgument(format!("base rate must be positive, got {gamma0}")));
        }
        if !(0.0..=1.0).contains(&alpha) {
            return Err(CoresetError::InvalidArgument(format!("exponent must lie in [0, 1], got {alpha}")));
        }
        Ok(Self { gamma0, alpha })
    }

    /// The default rate N/(10M) with α = 1 for full-data gradients and
    /// α = 0.5 when subsampling.
    pub fn default_for(n: usize, m: usize, subsampled: bool) -> Self {
        Self { gamma0: n as f64 / (10.0 * m as f64), alpha: if subsampled { 0.5 } else { 1.0 } }
    }

    pub fn rate(&self, t: u64) -> f64 {
        if self.alpha == 1.0 {
            return self.gamma0;
        }
        self.gamma0 * ((t + 1) as f64).powf(self.alpha - 1.0)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OptimizerKind {
    Sgd,
    Adam,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct OptimizerConfig {
    pub kind: OptimizerKind,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for OptimizerConfig {
    fn default() -> Self {
        Self { kind: OptimizerKind::Sgd, beta1: 0.9, beta2: 0.999, eps: 1e-8 }
    }
}

impl OptimizerConfig {
    pub fn adam() -> Self {
        Self { kind: OptimizerKind::Adam, ..Self::default() }
    }
}

/// Mutable optimizer state; serializable for checkpoints.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OptimizerState {
    pub config: OptimizerConfig,
    pub t: u64,
    pub first_moment: Vec<f64>,
    pub second_moment: Vec<f64>,
}

impl OptimizerState {
    pub fn new(config: OptimizerConfig, m: usize) -> Self {
        let (first_moment, second_moment) = match config.kind {
            OptimizerKind::Sgd => (Vec::new(), Vec::new()),
            OptimizerKind::Adam => (vec![0.0; m], vec![0.0; m]),
        };
        Self { config, t: 0, first_moment, second_moment }
    }

    /// w ← proj(w − γ_t · direction), where the direction is g itself for
    /// SGD and the bias-corrected moment ratio for ADAM.
    ///
    /// On error neither `w` nor the optimizer state is modified.
    pub fn step(&mut self, w: &mut [f64], g: &[f64], schedule: &Schedule, region: &FeasibleRegion) -> Result<()> {
        if g.len() != w.len() {
            return Err(CoresetError::DimensionMismatch { expected: w.len(), actual: g.len() });
        }
        if let Some(i) = g.iter().position(|v| !v.is_finite()) {
            return Err(CoresetError::NonFiniteGradient(i));
        }
        let rate = schedule.rate(self.t);
        let mut next = w.to_vec();
        let mut moments = None;
        match self.config.kind {
            OptimizerKind::Sgd => {
                for (wi, gi) in next.iter_mut().zip(g) {
                    *wi -= rate * gi;
                }
            }
            OptimizerKind::Adam => {
                let OptimizerConfig { beta1, beta2, eps, .. } = self.config;
                if self.first_moment.len() != w.len() {
                    return Err(CoresetError::DimensionMismatch { expected: self.first_moment.len(), actual: w.len() });
                }
                let mut m1 = self.first_moment.clone();
                let mut m2 = self.second_moment.clone();
                let step = (self.t + 1) as i32;
                let c1 = 1.0 - beta1.powi(step);
                let c2 = 1.0 - beta2.powi(step);
                for i in 0..w.len() {
                    m1[i] = beta1 * m1[i] + (1.0 - beta1) * g[i];
                    m2[i] = beta2 * m2[i] + (1.0 - beta2) * g[i] * g[i];
                    let m_hat = m1[i] / c1;
                    let v_hat = m2[i] / c2;
                    next[i] -= rate * m_hat / (v_hat.sqrt() + eps);
                }
                moments = Some((m1, m2));
            }
        }
        region.project_in_place(&mut next);
        let max_abs = next.iter().fold(0.0f64, |a, v| a.max(v.abs()));
        if !(max_abs <= DIVERGENCE_LIMIT) {
            return Err(CoresetError::Divergence(max_abs));
        }
        w.copy_from_slice(&next);
        if let Some((m1, m2)) = moments {
            self.first_moment = m1;
            self.second_moment = m2;
        }
        self.t += 1;
        Ok(())
    }
}
