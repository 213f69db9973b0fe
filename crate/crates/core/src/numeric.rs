//! Small numerical building blocks shared by the solvers: the standard
//! normal distribution, one-dimensional search and quadrature weights.

use std::f64::consts::{FRAC_1_SQRT_2, PI};

/// Standard normal CDF.
#[inline]
pub fn norm_cdf(x: f64) -> f64 {
    0.5 * libm::erfc(-x * FRAC_1_SQRT_2)
}

/// Standard normal density.
#[inline]
pub fn norm_pdf(x: f64) -> f64 {
    (-0.5 * x * x).exp() / (2.0 * PI).sqrt()
}

/// `E[(m - s Z)^+]` for standard normal `Z` and `s >= 0`.
#[inline]
pub fn normal_call_part(m: f64, s: f64) -> f64 {
    if s <= 0.0 {
        return m.max(0.0);
    }
    let z = m / s;
    m * norm_cdf(z) + s * norm_pdf(z)
}

/// Golden-section minimisation of a unimodal function on `[lo, hi]`.
///
/// Iterates until the bracket is narrower than `tol`. When the two interior
/// values agree to `1e-12` relative the left sub-interval is kept, so ties
/// resolve toward smaller arguments.
pub fn golden_section_min<F>(mut f: F, lo: f64, hi: f64, tol: f64) -> (f64, f64)
where
    F: FnMut(f64) -> f64,
{
    const INV_PHI: f64 = 0.618_033_988_749_894_9;
    let (mut a, mut b) = (lo.min(hi), lo.max(hi));
    if b - a <= tol {
        let x = 0.5 * (a + b);
        return (x, f(x));
    }
    let mut x1 = b - INV_PHI * (b - a);
    let mut x2 = a + INV_PHI * (b - a);
    let mut f1 = f(x1);
    let mut f2 = f(x2);
    while b - a > tol {
        if prefer_left(f1, f2) {
            b = x2;
            x2 = x1;
            f2 = f1;
            x1 = b - INV_PHI * (b - a);
            f1 = f(x1);
        } else {
            a = x1;
            x1 = x2;
            f1 = f2;
            x2 = a + INV_PHI * (b - a);
            f2 = f(x2);
        }
    }
    if prefer_left(f1, f2) {
        (x1, f1)
    } else {
        (x2, f2)
    }
}

#[inline]
fn prefer_left(f1: f64, f2: f64) -> bool {
    f1 <= f2 + 1e-12 * f1.abs().max(f2.abs())
}

/// Bisection for a sign change of `f` on `[lo, hi]`.
///
/// Returns `None` when `f(lo)` and `f(hi)` share a strict sign.
pub fn bisect<F>(mut f: F, lo: f64, hi: f64, tol: f64, max_iter: usize) -> Option<f64>
where
    F: FnMut(f64) -> f64,
{
    let (mut a, mut b) = (lo, hi);
    let fa = f(a);
    let fb = f(b);
    if fa == 0.0 {
        return Some(a);
    }
    if fb == 0.0 {
        return Some(b);
    }
    if fa.signum() == fb.signum() {
        return None;
    }
    let neg_at_a = fa < 0.0;
    for _ in 0..max_iter {
        let mid = 0.5 * (a + b);
        if b - a <= tol {
            return Some(mid);
        }
        let fm = f(mid);
        if fm == 0.0 {
            return Some(mid);
        }
        if (fm < 0.0) == neg_at_a {
            a = mid;
        } else {
            b = mid;
        }
    }
    Some(0.5 * (a + b))
}

/// Composite trapezoid weights for `n_points` equally spaced nodes.
pub fn trapezoid_weights(n_points: usize, h: f64) -> Vec<f64> {
    match n_points {
        0 => Vec::new(),
        1 => vec![0.0],
        n => {
            let mut w = vec![h; n];
            w[0] = 0.5 * h;
            w[n - 1] = 0.5 * h;
            w
        }
    }
}

/// Mean and standard error of a sample (`n - 1` denominator for the SE).
pub fn mean_and_se(values: &[f64]) -> (f64, f64) {
    let n = values.len();
    if n == 0 {
        return (f64::NAN, f64::NAN);
    }
    let mean = values.iter().sum::<f64>() / n as f64;
    if n == 1 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
    (mean, (var / n as f64).sqrt())
}
