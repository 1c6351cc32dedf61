//! Test-side oracles, independent of the library's evaluation paths.

#![allow(dead_code)]

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Adaptive Simpson quadrature with absolute tolerance.
pub fn integrate<F: Fn(f64) -> f64 + Copy>(f: F, a: f64, b: f64, tol: f64) -> f64 {
    fn simpson<F: Fn(f64) -> f64>(f: &F, a: f64, fa: f64, b: f64, fb: f64) -> (f64, f64, f64) {
        let m = 0.5 * (a + b);
        let fm = f(m);
        ((b - a) / 6.0 * (fa + 4.0 * fm + fb), m, fm)
    }
    #[allow(clippy::too_many_arguments)]
    fn recurse<F: Fn(f64) -> f64>(
        f: &F,
        a: f64,
        fa: f64,
        b: f64,
        fb: f64,
        whole: f64,
        m: f64,
        fm: f64,
        tol: f64,
        depth: u32,
    ) -> f64 {
        let (left, lm, flm) = simpson(f, a, fa, m, fm);
        let (right, rm, frm) = simpson(f, m, fm, b, fb);
        let delta = left + right - whole;
        if depth == 0 || delta.abs() <= 15.0 * tol {
            left + right + delta / 15.0
        } else {
            recurse(f, a, fa, m, fm, left, lm, flm, 0.5 * tol, depth - 1)
                + recurse(f, m, fm, b, fb, right, rm, frm, 0.5 * tol, depth - 1)
        }
    }
    let fa = f(a);
    let fb = f(b);
    let (whole, m, fm) = simpson(&f, a, fa, b, fb);
    recurse(&f, a, fa, b, fb, whole, m, fm, tol, 48)
}

/// Regularized incomplete beta by quadrature of the beta integrand; both the
/// partial and the complete integral come from the same quadrature, no
/// gamma-function identities involved. The integrand is normalized by its
/// scanned peak so the absolute quadrature tolerance acts relatively.
pub fn inc_beta_quadrature(x: f64, p: f64, q: f64) -> f64 {
    let raw = move |t: f64| {
        if t <= 0.0 || t >= 1.0 {
            0.0
        } else {
            t.powf(p - 1.0) * (1.0 - t).powf(q - 1.0)
        }
    };
    let peak = (1..512).map(|i| raw(i as f64 / 512.0)).fold(f64::MIN_POSITIVE, f64::max);
    let integrand = move |t: f64| raw(t) / peak;
    let partial = integrate(integrand, 0.0, x, 1e-14);
    let full = partial + integrate(integrand, x, 1.0, 1e-14);
    partial / full
}

/// Central F CDF by quadrature of the F density (the complete beta constant
/// also comes from quadrature).
pub fn f_cdf_quadrature(x: f64, d1: f64, d2: f64) -> f64 {
    let beta_const = integrate(
        move |t: f64| {
            if t <= 0.0 || t >= 1.0 {
                0.0
            } else {
                t.powf(0.5 * d1 - 1.0) * (1.0 - t).powf(0.5 * d2 - 1.0)
            }
        },
        0.0,
        1.0,
        1e-14,
    );
    let density = move |t: f64| {
        if t <= 0.0 {
            0.0
        } else {
            (d1 / d2).powf(0.5 * d1) * t.powf(0.5 * d1 - 1.0) * (1.0 + d1 * t / d2).powf(-0.5 * (d1 + d2))
                / beta_const
        }
    };
    integrate(density, 0.0, x, 1e-13)
}

/// Quantile by plain bisection on the quadrature CDF.
pub fn f_quantile_bisection(gamma: f64, d1: f64, d2: f64) -> f64 {
    let mut lo = 0.0;
    let mut hi = 1.0;
    while f_cdf_quadrature(hi, d1, d2) < gamma {
        hi *= 2.0;
    }
    for _ in 0..80 {
        let mid = 0.5 * (lo + hi);
        if f_cdf_quadrature(mid, d1, d2) < gamma {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

/// Monte Carlo estimate of the noncentral F CDF at `x` by sampling the ratio
/// of independent (noncentral) chi-squares. Returns (estimate, standard
/// error).
pub fn noncentral_f_cdf_mc(x: f64, d1: f64, d2: f64, lambda: f64, draws: u64, seed: u64) -> (f64, f64) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut hits = 0u64;
    for _ in 0..draws {
        let num = anova_power::dist::sample::noncentral_chi_square(&mut rng, d1, lambda) / d1;
        let den = anova_power::dist::sample::chi_square(&mut rng, d2) / d2;
        if num / den <= x {
            hits += 1;
        }
    }
    let p = hits as f64 / draws as f64;
    (p, (p * (1.0 - p) / draws as f64).sqrt())
}

/// Projects an effect array onto the zero-margin subspace (subtract each
/// axis's running means; the axis-centering operators commute).
pub fn project_margins(dims: &[usize], values: &mut [f64]) {
    for axis in 0..dims.len() {
        let stride: usize = dims[axis + 1..].iter().product();
        let outer: usize = dims[..axis].iter().product();
        for o in 0..outer {
            for i in 0..stride {
                let mut mean = 0.0;
                for l in 0..dims[axis] {
                    mean += values[o * dims[axis] * stride + l * stride + i];
                }
                mean /= dims[axis] as f64;
                for l in 0..dims[axis] {
                    values[o * dims[axis] * stride + l * stride + i] -= mean;
                }
            }
        }
    }
}

/// Constrained brute force: minimizes the sum of squares over zero-margin
/// arrays with range `delta`, by projected gradient descent on the
/// scale-invariant objective `sum / range^2` with random restarts.
pub fn min_effect_sum_brute_force(dims: &[usize], delta: f64, restarts: u32, seed: u64) -> f64 {
    let total: usize = dims.iter().product();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut best = f64::INFINITY;
    for _ in 0..restarts {
        let mut alpha: Vec<f64> = (0..total).map(|_| rng.random_range(-1.0..1.0)).collect();
        project_margins(dims, &mut alpha);
        let mut g_prev = f64::INFINITY;
        for iter in 0..20_000 {
            let (mut max_i, mut min_i) = (0, 0);
            for (i, &v) in alpha.iter().enumerate() {
                if v > alpha[max_i] {
                    max_i = i;
                }
                if v < alpha[min_i] {
                    min_i = i;
                }
            }
            let range = alpha[max_i] - alpha[min_i];
            if range < 1e-12 {
                break;
            }
            let s: f64 = alpha.iter().map(|v| v * v).sum();
            let g = s / (range * range);
            // Gradient of s / range^2 with the active extremes held fixed.
            let mut grad: Vec<f64> = alpha.iter().map(|v| 2.0 * v / (range * range)).collect();
            grad[max_i] -= 2.0 * s / (range * range * range);
            grad[min_i] += 2.0 * s / (range * range * range);
            project_margins(dims, &mut grad);
            let eta = 0.1 * range * range / (1.0 + iter as f64 / 2000.0);
            for (a, d) in alpha.iter_mut().zip(&grad) {
                *a -= eta * d;
            }
            project_margins(dims, &mut alpha);
            if (g_prev - g).abs() < 1e-14 && iter > 100 {
                break;
            }
            g_prev = g;
        }
        let max = alpha.iter().cloned().fold(f64::MIN, f64::max);
        let min = alpha.iter().cloned().fold(f64::MAX, f64::min);
        let range = max - min;
        if range > 1e-12 {
            let s: f64 = alpha.iter().map(|v| v * v).sum();
            best = best.min(s / (range * range));
        }
    }
    best * delta * delta
}

/// Deterministic pseudo-random helpers for test parameter grids.
pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}
