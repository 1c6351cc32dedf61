//! Safeguarded scalar root finding for monotone functions.
//!
//! Both the F-quantile inversion and the pivot-parameter sample-size search
//! solve `f(x) = target` for a nondecreasing `f` on a bracketing interval.
//! The solver mixes secant steps with bisection so it can never leave the
//! bracket, and stops on either a residual or an interval-width criterion.

/// Iteration cap for [`solve_monotone`]. With guaranteed bisection progress
/// this bounds the bracket width by `2^-200` of its initial size.
const MAX_ITER: usize = 200;

/// Controls when [`solve_monotone`] accepts an abscissa.
#[derive(Debug, Clone, Copy)]
pub struct Tolerance {
    /// Accept when `|f(x) - target|` falls below this.
    pub residual: f64,
    /// Accept when the bracket width falls below `x_rel * max(1, |x|)`.
    pub x_rel: f64,
}

impl Default for Tolerance {
    fn default() -> Self {
        Tolerance { residual: 1e-12, x_rel: 1e-12 }
    }
}

/// Solves `f(x) = target` for nondecreasing `f` with `f(lo) <= target <= f(hi)`.
///
/// Returns the abscissa; callers that need the residual can re-evaluate.
/// Points where `f` returns NaN are treated as below target, which keeps
/// the search inside the well-defined region.
pub fn solve_monotone<F: FnMut(f64) -> f64>(
    mut f: F,
    target: f64,
    mut lo: f64,
    mut hi: f64,
    tol: Tolerance,
) -> f64 {
    debug_assert!(lo <= hi);
    let mut flo = f(lo) - target;
    let mut fhi = f(hi) - target;
    if flo >= 0.0 {
        return lo;
    }
    if fhi <= 0.0 {
        return hi;
    }

    let mut x = 0.5 * (lo + hi);
    for iter in 0..MAX_ITER {
        // Secant proposal through the bracket endpoints; fall back to
        // bisection when it degenerates or leaves the (shrunk) interval.
        let width = hi - lo;
        let secant = if (fhi - flo).abs() > f64::MIN_POSITIVE {
            lo - flo * width / (fhi - flo)
        } else {
            f64::NAN
        };
        x = if iter % 2 == 1 || !secant.is_finite() || secant <= lo + 0.01 * width || secant >= hi - 0.01 * width {
            lo + 0.5 * width
        } else {
            secant
        };

        let fx = f(x) - target;
        if fx.abs() <= tol.residual {
            return x;
        }
        if fx.is_nan() || fx < 0.0 {
            lo = x;
            flo = fx;
        } else {
            hi = x;
            fhi = fx;
        }
        if hi - lo <= tol.x_rel * x.abs().max(1.0) {
            return 0.5 * (lo + hi);
        }
    }
    x
}

/// Expands `hi` geometrically from `start` until `f(hi) >= target`, returning
/// the bracket `(lo, hi)`. Returns `None` if no bracket is found before
/// `limit`.
pub fn bracket_upward<F: FnMut(f64) -> f64>(
    mut f: F,
    target: f64,
    start: f64,
    limit: f64,
) -> Option<(f64, f64)> {
    let mut lo = start;
    let mut hi = start;
    for _ in 0..2048 {
        if f(hi) >= target {
            return Some((lo, hi));
        }
        lo = hi;
        hi *= 2.0;
        if hi > limit {
            return None;
        }
    }
    None
}
