//! Coreset indices, weights, feasible regions and Euclidean projection.

use std::fs;
use std::path::Path;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{CoresetError, Result};
use crate::model::Model;

/// Tolerance below zero tolerated for a weight to count as nonnegative.
pub const WEIGHT_FLOOR_TOL: f64 = 1e-12;
/// Relative tolerance on 1ᵀw for the sum-constrained regions.
pub const SUM_REL_TOL: f64 = 1e-9;

/// Convex feasible set 𝒲 for the weights.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum FeasibleRegion {
    /// {w : w ≥ 0}
    Nonneg,
    /// {w : w ≥ 0, 1ᵀw = total}
    SimplexSumN { total: f64 },
    /// {w : 1ᵀw = total}; weights may be negative.
    HyperplaneSumN { total: f64 },
}

/// Region selector without the total, as used in configuration.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RegionKind {
    Nonneg,
    SimplexSumN,
    HyperplaneSumN,
}

impl RegionKind {
    pub fn with_total(self, total: f64) -> Result<FeasibleRegion> {
        match self {
            RegionKind::Nonneg => Ok(FeasibleRegion::Nonneg),
            RegionKind::SimplexSumN => FeasibleRegion::simplex(total),
            RegionKind::HyperplaneSumN => FeasibleRegion::hyperplane(total),
        }
    }
}

impl FeasibleRegion {
    pub fn simplex(total: f64) -> Result<Self> {
        check_total(total)?;
        Ok(Self::SimplexSumN { total })
    }

    pub fn hyperplane(total: f64) -> Result<Self> {
        check_total(total)?;
        Ok(Self::HyperplaneSumN { total })
    }

    pub fn kind(&self) -> RegionKind {
        match self {
            Self::Nonneg => RegionKind::Nonneg,
            Self::SimplexSumN { .. } => RegionKind::SimplexSumN,
            Self::HyperplaneSumN { .. } => RegionKind::HyperplaneSumN,
        }
    }

    fn total(&self) -> Option<f64> {
        match *self {
            Self::Nonneg => None,
            Self::SimplexSumN { total } | Self::HyperplaneSumN { total } => Some(total),
        }
    }

    fn nonneg_required(&self) -> bool {
        !matches!(self, Self::HyperplaneSumN { .. })
    }

    /// Membership with the region tolerances.
    pub fn contains(&self, w: &[f64]) -> bool {
        if w.iter().any(|v| !v.is_finite()) {
            return false;
        }
        if self.nonneg_required() && w.iter().any(|&v| v < -WEIGHT_FLOOR_TOL) {
            return false;
        }
        match self.total() {
            Some(total) => (crate::numeric::compensated_sum(w.iter()) - total).abs() <= self.sum_tolerance(w),
            None => true,
        }
    }

    /// Allowed |1ᵀw − total|: relative to the total, plus (on the
    /// hyperplane, where entries can dwarf the total) the spacing of sums
    /// that f64 entries of this size can represent at all.
    fn sum_tolerance(&self, w: &[f64]) -> f64 {
        match *self {
            Self::Nonneg => f64::INFINITY,
            Self::SimplexSumN { total } => SUM_REL_TOL * total,
            Self::HyperplaneSumN { total } => {
                let largest = w.iter().fold(0.0f64, |a, v| a.max(v.abs()));
                SUM_REL_TOL * total + w.len() as f64 * f64::EPSILON * largest
            }
        }
    }

    /// Feasible up to floating-point rounding of the sum.
    fn contains_to_rounding(&self, w: &[f64]) -> bool {
        if self.nonneg_required() && w.iter().any(|&v| v < 0.0) {
            return false;
        }
        match self.total() {
            Some(total) => {
                let abs_sum: f64 = w.iter().map(|v| v.abs()).sum();
                let slack = (8.0 * (w.len() as f64 + 1.0) * f64::EPSILON * total.max(abs_sum)).min(self.sum_tolerance(w));
                (crate::numeric::compensated_sum(w.iter()) - total).abs() <= slack
            }
            None => true,
        }
    }

    /// Euclidean projection argmin_{v ∈ region} ‖v − w‖₂.
    pub fn project(&self, w: &[f64]) -> Vec<f64> {
        let mut v = w.to_vec();
        self.project_in_place(&mut v);
        v
    }

    pub fn project_in_place(&self, w: &mut [f64]) {
        match *self {
            Self::Nonneg => w.iter_mut().for_each(|v| *v = v.max(0.0)),
            Self::SimplexSumN { total } => {
                if !self.contains_to_rounding(w) {
                    project_simplex(w, total);
                    correct_sum(w, total, true);
                }
            }
            Self::HyperplaneSumN { total } => {
                if !self.contains_to_rounding(w) {
                    let shift = (w.iter().sum::<f64>() - total) / w.len() as f64;
                    w.iter_mut().for_each(|v| *v -= shift);
                    correct_sum(w, total, false);
                }
            }
        }
    }
}

fn check_total(total: f64) -> Result<()> {
    if !(total.is_finite() && total > 0.0) {
        return Err(CoresetError::InvalidArgument(format!("region total must be positive, got {total}")));
    }
    Ok(())
}

/// Removes the rounding residual of 1ᵀw − total left by a projection that
/// cancelled large entries, spreading it over the free coordinates. What
/// the spread cannot absorb (entries much larger than the residual swallow
/// it) goes to the smallest free coordinate that can take it.
fn correct_sum(w: &mut [f64], total: f64, nonneg: bool) {
    let residual_of = |w: &[f64]| crate::numeric::compensated_sum(w.iter()) - total;
    for _ in 0..3 {
        let residual = residual_of(w);
        if residual == 0.0 {
            return;
        }
        let free = w.iter().filter(|&&v| !nonneg || v > 0.0).count();
        if free == 0 {
            return;
        }
        let shift = residual / free as f64;
        for v in w.iter_mut().filter(|v| !nonneg || **v > 0.0) {
            *v -= shift;
            if nonneg {
                *v = v.max(0.0);
            }
        }
    }
    for _ in 0..3 {
        let residual = residual_of(w);
        if residual == 0.0 {
            return;
        }
        let target = w
            .iter()
            .enumerate()
            .filter(|(_, &v)| !nonneg || (v > 0.0 && v - residual >= 0.0))
            .min_by(|a, b| a.1.abs().total_cmp(&b.1.abs()))
            .map(|(i, _)| i);
        match target {
            Some(i) => w[i] -= residual,
            None => return,
        }
    }
}

/// Sort-and-threshold projection onto {v ≥ 0, 1ᵀv = total}.
fn project_simplex(w: &mut [f64], total: f64) {
    let mut sorted = w.to_vec();
    sorted.sort_by(|a, b| b.total_cmp(a));
    let mut cumulative = 0.0;
    let mut threshold = 0.0;
    for (j, &u) in sorted.iter().enumerate() {
        cumulative += u;
        let candidate = (cumulative - total) / (j + 1) as f64;
        if u - candidate > 0.0 {
            threshold = candidate;
        }
    }
    w.iter_mut().for_each(|v| *v = (*v - threshold).max(0.0));
}

/// Selected coreset points and their weights.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CoresetState {
    pub indices: Vec<usize>,
    pub weights: Vec<f64>,
    pub region: FeasibleRegion,
}

impl CoresetState {
    /// Builds a state, checking index distinctness and region membership.
    pub fn new(indices: Vec<usize>, weights: Vec<f64>, region: FeasibleRegion, n: usize) -> Result<Self> {
        let state = Self { indices, weights, region };
        state.validate(n)?;
        Ok(state)
    }

    pub fn len(&self) -> usize {
        self.indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }

    pub fn validate(&self, n: usize) -> Result<()> {
        if self.indices.len() != self.weights.len() {
            return Err(CoresetError::DimensionMismatch {
                expected: self.indices.len(),
                actual: self.weights.len(),
            });
        }
        let mut seen = vec![false; n];
        for &i in &self.indices {
            if i >= n {
                return Err(CoresetError::IndexOutOfRange { index: i, len: n });
            }
            if std::mem::replace(&mut seen[i], true) {
                return Err(CoresetError::InvalidArgument(format!("duplicate coreset index {i}")));
            }
        }
        if !self.region.contains(&self.weights) {
            return Err(CoresetError::InvalidArgument("weights outside the feasible region".into()));
        }
        Ok(())
    }

    /// Unnormalized log π_w(θ) = Σ_m w_m ℓ_m(θ) + log π₀(θ), without checks.
    #[inline]
    pub fn log_density<M: Model + ?Sized>(&self, model: &M, theta: &[f64]) -> f64 {
        let mut acc = model.log_prior(theta);
        for (&w, &i) in self.weights.iter().zip(&self.indices) {
            if w != 0.0 {
                acc += w * model.log_lik(i, theta);
            }
        }
        acc
    }

    /// Weights as one CSV column with a `w` header.
    pub fn write_weights_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut wtr = csv::Writer::from_path(path)?;
        wtr.write_record(["index", "w"])?;
        for (i, w) in self.indices.iter().zip(&self.weights) {
            wtr.write_record([i.to_string(), w.to_string()])?;
        }
        wtr.flush()?;
        Ok(())
    }

    pub fn read_weights_csv(path: impl AsRef<Path>) -> Result<(Vec<usize>, Vec<f64>)> {
        let text = fs::read_to_string(path)?;
        let mut rdr = csv::Reader::from_reader(text.as_bytes());
        let mut idx = Vec::new();
        let mut w = Vec::new();
        for (line, rec) in rdr.records().enumerate() {
            let rec = rec?;
            let parse_err = |m: &str| CoresetError::Parse { line: line + 2, message: m.to_string() };
            idx.push(rec.get(0).and_then(|s| s.parse().ok()).ok_or_else(|| parse_err("bad index"))?);
            w.push(rec.get(1).and_then(|s| s.parse().ok()).ok_or_else(|| parse_err("bad weight"))?);
        }
        Ok((idx, w))
    }
}

/// Checked version of [`CoresetState::log_density`].
pub fn coreset_log_density<M: Model + ?Sized>(state: &CoresetState, model: &M, theta: &[f64]) -> Result<f64> {
    crate::model::check_dim(model.dim(), theta)?;
    Ok(state.log_density(model, theta))
}

/// Uniform weights N/M.
pub fn init_weights(m: usize, n: usize) -> Vec<f64> {
    vec![n as f64 / m as f64; m]
}

/// Moves `k` uniformly chosen elements of `pool` to its front (partial Fisher–Yates).
fn partial_shuffle<R: Rng + ?Sized>(pool: &mut [usize], k: usize, rng: &mut R) {
    for i in 0..k {
        let j = rng.random_range(i..pool.len());
        pool.swap(i, j);
    }
}

/// Draws `m` distinct indices out of `0..n` uniformly without replacement.
///
/// With `labels` (binary classes) the selection is stratified: when `m`
/// exceeds twice the minority-class count every minority point is
/// included and the rest is drawn from the majority class; otherwise the
/// coreset is split evenly between the classes.
pub fn select_points<R: Rng + ?Sized>(n: usize, m: usize, labels: Option<&[bool]>, rng: &mut R) -> Result<Vec<usize>> {
    if m == 0 || m > n {
        return Err(CoresetError::InvalidArgument(format!("coreset size {m} must lie in 1..={n}")));
    }
    let Some(labels) = labels else {
        let mut pool: Vec<usize> = (0..n).collect();
        partial_shuffle(&mut pool, m, rng);
        pool.truncate(m);
        return Ok(pool);
    };
    if labels.len() != n {
        return Err(CoresetError::DimensionMismatch { expected: n, actual: labels.len() });
    }
    let (mut pos, mut neg): (Vec<usize>, Vec<usize>) = (0..n).partition(|&i| labels[i]);
    if pos.is_empty() || neg.is_empty() {
        return select_points(n, m, None, rng);
    }
    let pos_is_minority = pos.len() <= neg.len();
    let (minority, majority) = if pos_is_minority { (&mut pos, &mut neg) } else { (&mut neg, &mut pos) };
    let take_minority = if m > 2 * minority.len() { minority.len() } else { m / 2 };
    let take_majority = m - take_minority;
    partial_shuffle(minority, take_minority, rng);
    partial_shuffle(majority, take_majority, rng);
    let mut out: Vec<usize> = minority[..take_minority].to_vec();
    out.extend_from_slice(&majority[..take_majority]);
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::Dataset;
    use crate::model::{BuiltinModel, ModelKind};
    use crate::rng;
    use proptest::prelude::*;
    use rand::Rng;

    #[test]
    fn exhaustive_selection() {
        let mut r = rng::stream(1, rng::SELECT_STREAM);
        let mut s = select_points(5, 5, None, &mut r).unwrap();
        s.sort();
        assert_eq!(s, vec![0, 1, 2, 3, 4]);
    }

    #[test]
    fn selection_is_deterministic_and_distinct() {
        let a = select_points(10_000, 30, None, &mut rng::stream(9, rng::SELECT_STREAM)).unwrap();
        let b = select_points(10_000, 30, None, &mut rng::stream(9, rng::SELECT_STREAM)).unwrap();
        assert_eq!(a, b);
        let mut s = a.clone();
        s.sort();
        s.dedup();
        assert_eq!(s.len(), 30);
    }

    #[test]
    fn oversize_selection_rejected() {
        assert!(select_points(3, 4, None, &mut rng::stream(0, 0)).is_err());
    }

    #[test]
    fn rare_class_fully_included() {
        let mut labels = vec![false; 100];
        for i in [3, 40, 77, 98] {
            labels[i] = true;
        }
        for seed in 0..20 {
            let s = select_points(100, 10, Some(&labels), &mut rng::stream(seed, 1)).unwrap();
            assert_eq!(s.len(), 10);
            for i in [3, 40, 77, 98] {
                assert!(s.contains(&i));
            }
        }
    }

    #[test]
    fn balanced_split_when_minority_is_large() {
        let labels: Vec<bool> = (0..100).map(|i| i % 5 == 0).collect(); // 20 positives
        let s = select_points(100, 10, Some(&labels), &mut rng::stream(3, 1)).unwrap();
        assert_eq!(s.iter().filter(|&&i| labels[i]).count(), 5);
    }

    #[test]
    fn init_weight_values() {
        let w = init_weights(30, 10_000);
        assert!(w.iter().all(|&v| v == 10_000.0 / 30.0));
        assert!((w[0] - 1000.0 / 3.0).abs() < 1e-12);
        assert_eq!(init_weights(4, 4), vec![1.0; 4]);
        assert_eq!(init_weights(1, 7), vec![7.0]);
    }

    #[test]
    fn projection_examples() {
        assert_eq!(FeasibleRegion::Nonneg.project(&[-1.0, 2.0]), vec![0.0, 2.0]);
        let simplex = FeasibleRegion::simplex(2.0).unwrap();
        assert_eq!(simplex.project(&[3.0, -1.0]), vec![2.0, 0.0]);
        assert_eq!(simplex.project(&[0.5, 1.5]), vec![0.5, 1.5]);
        let hyper = FeasibleRegion::hyperplane(2.0).unwrap();
        assert_eq!(hyper.project(&[3.0, -1.0]), vec![3.0, -1.0]);
        assert_eq!(hyper.project(&[3.0, 1.0]), vec![2.0, 0.0]);
        assert!(FeasibleRegion::simplex(0.0).is_err());
        assert!(FeasibleRegion::hyperplane(-1.0).is_err());
    }

    /// Brute-force projection: enumerate which coordinates are pinned to zero,
    /// solve the equality-constrained problem on the rest, keep the best
    /// feasible candidate.
    fn brute_force_simplex(w: &[f64], total: f64) -> Vec<f64> {
        let m = w.len();
        let mut best: Option<(f64, Vec<f64>)> = None;
        for mask in 1u32..(1 << m) {
            let free: Vec<usize> = (0..m).filter(|i| mask & (1 << i) != 0).collect();
            let shift = (free.iter().map(|&i| w[i]).sum::<f64>() - total) / free.len() as f64;
            let mut v = vec![0.0; m];
            for &i in &free {
                v[i] = w[i] - shift;
            }
            if v.iter().any(|&x| x < -1e-12) {
                continue;
            }
            let dist: f64 = v.iter().zip(w).map(|(a, b)| (a - b).powi(2)).sum();
            if best.as_ref().is_none_or(|(d, _)| dist < *d) {
                best = Some((dist, v));
            }
        }
        best.unwrap().1
    }

    #[test]
    fn kkt_enumeration_agrees_on_example() {
        let bf = brute_force_simplex(&[3.0, -1.0], 2.0);
        assert_eq!(bf, vec![2.0, 0.0]);
    }

    #[test]
    fn optimality_against_feasible_points() {
        let mut r = rng::stream(5, 0);
        for trial in 0..10_000 {
            let m = 1 + trial % 8;
            let total = r.random_range(0.5..20.0);
            let w: Vec<f64> = (0..m).map(|_| r.random_range(-10.0..10.0)).collect();
            // random feasible v on the simplex
            let raw: Vec<f64> = (0..m).map(|_| r.random_range(0.0..1.0)).collect();
            let s: f64 = raw.iter().sum();
            let v: Vec<f64> = raw.iter().map(|x| x / s * total).collect();
            let region = FeasibleRegion::simplex(total).unwrap();
            let p = region.project(&w);
            let dist = |a: &[f64]| a.iter().zip(&w).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt();
            assert!(dist(&p) <= dist(&v) + 1e-10);
            let bf = brute_force_simplex(&w, total);
            assert!((dist(&p) - dist(&bf)).abs() <= 1e-9, "{w:?} {p:?} {bf:?}");
        }
    }

    proptest! {
        #[test]
        fn simplex_projection_feasible_and_idempotent(
            w in prop::collection::vec(-1e6f64..1e6, 1..40),
            total in 1e-3f64..1e5,
        ) {
            let region = FeasibleRegion::simplex(total).unwrap();
            let p = region.project(&w);
            prop_assert!(region.contains(&p));
            prop_assert_eq!(region.project(&p), p);
        }

        #[test]
        fn hyperplane_projection_feasible_and_idempotent(
            w in prop::collection::vec(-1e6f64..1e6, 1..40),
            total in 1e-3f64..1e5,
        ) {
            let region = FeasibleRegion::hyperplane(total).unwrap();
            let p = region.project(&w);
            prop_assert!(region.contains(&p));
            prop_assert_eq!(region.project(&p), p);
        }

        #[test]
        fn nonneg_projection_idempotent(w in prop::collection::vec(-1e6f64..1e6, 1..40)) {
            let p = FeasibleRegion::Nonneg.project(&w);
            prop_assert!(FeasibleRegion::Nonneg.contains(&p));
            prop_assert_eq!(FeasibleRegion::Nonneg.project(&p), p);
        }
    }

    #[test]
    fn coreset_log_density_cases() {
        let data = Dataset::new(vec![0.0, 1.0, 2.0], vec![0.0; 3], 1).unwrap();
        let model = BuiltinModel::new(ModelKind::GaussianLocation, data).unwrap();
        let theta = [0.4];
        let zero = CoresetState::new(vec![0, 2], vec![0.0, 0.0], FeasibleRegion::Nonneg, 3).unwrap();
        assert_eq!(coreset_log_density(&zero, &model, &theta).unwrap(), model.log_prior(&theta));
        let full = CoresetState::new(vec![0, 1, 2], vec![1.0; 3], FeasibleRegion::Nonneg, 3).unwrap();
        let expect: f64 = (0..3).map(|i| model.log_lik(i, &theta)).sum::<f64>() + model.log_prior(&theta);
        assert!((coreset_log_density(&full, &model, &theta).unwrap() - expect).abs() < 1e-14);
        assert!(coreset_log_density(&full, &model, &[0.0, 0.0]).is_err());
    }

    #[test]
    fn weighted_sum_arithmetic() {
        // ℓ₁ = −1, ℓ₂ = −2, log π₀ = −0.5 → 2·(−1) + 3·(−2) − 0.5
        struct Fixed;
        impl Model for Fixed {
            fn dim(&self) -> usize { 1 }
            fn num_observations(&self) -> usize { 2 }
            fn log_prior(&self, _: &[f64]) -> f64 { -0.5 }
            fn log_lik(&self, n: usize, _: &[f64]) -> f64 { -(n as f64 + 1.0) }
        }
        let s = CoresetState::new(vec![0, 1], vec![2.0, 3.0], FeasibleRegion::Nonneg, 2).unwrap();
        assert_eq!(coreset_log_density(&s, &Fixed, &[0.0]).unwrap(), -8.5);
    }

    #[test]
    fn state_validation() {
        let r = FeasibleRegion::simplex(4.0).unwrap();
        assert!(CoresetState::new(vec![0, 1], vec![2.0, 2.0], r, 4).is_ok());
        assert!(CoresetState::new(vec![0, 0], vec![2.0, 2.0], r, 4).is_err());
        assert!(CoresetState::new(vec![0, 9], vec![2.0, 2.0], r, 4).is_err());
        assert!(CoresetState::new(vec![0, 1], vec![3.0, 2.0], r, 4).is_err());
        assert!(CoresetState::new(vec![0, 1], vec![4.0 + 1e-13, -1e-13], r, 4).is_ok());
    }

    #[test]
    fn weights_csv_round_trip() {
        let s = CoresetState::new(vec![4, 1], vec![0.1 + 0.2, 7.0], FeasibleRegion::Nonneg, 5).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("w.csv");
        s.write_weights_csv(&p).unwrap();
        let (idx, w) = CoresetState::read_weights_csv(&p).unwrap();
        assert_eq!(idx, s.indices);
        assert_eq!(w, s.weights);
    }
}
