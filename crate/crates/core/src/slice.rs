//! Univariate slice sampling with the doubling procedure and shrinkage.
//!
//! A point is in the slice when its log density is at least the level
//! (non-strict); NaN log densities are treated as −∞.

use rand::Rng;
use rand_distr::{Distribution, Exp1};

/// What happened during one slice update.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct SliceDiagnostics {
    /// Doubling stopped at the limit with an endpoint still inside the slice.
    pub doublings_exhausted: bool,
    pub doublings: u32,
    pub shrinks: u32,
    pub evaluations: u32,
    /// The shrinkage interval collapsed onto the initial point.
    pub collapsed: bool,
}

/// Result of one update: the new point and its log density.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SliceStep {
    pub x: f64,
    pub log_density: f64,
    pub diagnostics: SliceDiagnostics,
}

const MAX_SHRINKS: u32 = 200;

struct Counted<F> {
    f: F,
    evaluations: u32,
}

impl<F: FnMut(f64) -> f64> Counted<F> {
    fn eval(&mut self, x: f64) -> f64 {
        self.evaluations += 1;
        let v = (self.f)(x);
        if v.is_nan() {
            f64::NEG_INFINITY
        } else {
            v
        }
    }
}

/// One slice-sampling update of `x0`, whose log density `fx0` must be finite.
/// The level is drawn as `fx0 − Exp(1)`.
pub fn slice_step_1d<F, R>(logdensity: F, x0: f64, fx0: f64, width: f64, max_doublings: u32, rng: &mut R) -> SliceStep
where
    F: FnMut(f64) -> f64,
    R: Rng + ?Sized,
{
    let e: f64 = Exp1.sample(rng);
    slice_step_with_level(logdensity, x0, fx0, fx0 - e, width, max_doublings, rng)
}

/// As [`slice_step_1d`] with an explicit slice level.
pub fn slice_step_with_level<F, R>(
    logdensity: F,
    x0: f64,
    fx0: f64,
    level: f64,
    width: f64,
    max_doublings: u32,
    rng: &mut R,
) -> SliceStep
where
    F: FnMut(f64) -> f64,
    R: Rng + ?Sized,
{
    debug_assert!(fx0.is_finite(), "slice update from a point with log density {fx0}");
    debug_assert!(width > 0.0);
    let mut f = Counted { f: logdensity, evaluations: 0 };
    let mut diag = SliceDiagnostics::default();

    // Doubling: interval of size `width` placed uniformly around x0.
    let u: f64 = rng.random();
    let mut left = x0 - width * u;
    let mut right = left + width;
    let mut f_left = f.eval(left);
    let mut f_right = f.eval(right);
    let mut remaining = max_doublings;
    while remaining > 0 && (f_left >= level || f_right >= level) {
        let span = right - left;
        if rng.random::<f64>() < 0.5 {
            left -= span;
            f_left = f.eval(left);
        } else {
            right += span;
            f_right = f.eval(right);
        }
        remaining -= 1;
        diag.doublings += 1;
    }
    diag.doublings_exhausted = f_left >= level || f_right >= level;

    // Shrinkage with the doubling acceptance test.
    let (mut lo, mut hi) = (left, right);
    loop {
        let x1 = lo + rng.random::<f64>() * (hi - lo);
        let fx1 = f.eval(x1);
        if fx1 >= level && accept(&mut f, x0, x1, level, left, right, width) {
            debug_assert!(fx1 >= level);
            diag.evaluations = f.evaluations;
            return SliceStep { x: x1, log_density: fx1, diagnostics: diag };
        }
        if x1 < x0 {
            lo = x1;
        } else {
            hi = x1;
        }
        diag.shrinks += 1;
        let scale = x0.abs().max(width) * 4.0 * f64::EPSILON;
        if hi - lo <= scale || diag.shrinks >= MAX_SHRINKS {
            diag.collapsed = true;
            diag.evaluations = f.evaluations;
            return SliceStep { x: x0, log_density: fx0, diagnostics: diag };
        }
    }
}

/// Checks that the doubling procedure started from `x1` could have produced
/// the same interval, which keeps the update reversible.
fn accept<F: FnMut(f64) -> f64>(
    f: &mut Counted<F>,
    x0: f64,
    x1: f64,
    level: f64,
    left: f64,
    right: f64,
    width: f64,
) -> bool {
    let (mut l, mut r) = (left, right);
    let mut differ = false;
    let mut f_l: Option<f64> = None;
    let mut f_r: Option<f64> = None;
    while r - l > 1.1 * width {
        let mid = 0.5 * (l + r);
        if (x0 < mid && x1 >= mid) || (x0 >= mid && x1 < mid) {
            differ = true;
        }
        if x1 < mid {
            r = mid;
            f_r = None;
        } else {
            l = mid;
            f_l = None;
        }
        if differ {
            let fl = *f_l.get_or_insert_with(|| f.eval(l));
            let fr = *f_r.get_or_insert_with(|| f.eval(r));
            if fl < level && fr < level {
                return false;
            }
        }
    }
    true
}
