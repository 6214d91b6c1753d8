//! Chi-squared distribution helpers built on the regularized incomplete gamma
//! function. Quantiles are upper-tail: `chi2_quantile(alpha, k)` returns the
//! `x` with `Pr[Y > x] = alpha` for `Y ~ chi2(k)`.

use crate::error::{ensure, Result};

const EPS: f64 = 1e-16;
const MAX_ITER: usize = 10_000;
/// Residual target on the tail probability when inverting.
const CDF_TOLERANCE: f64 = 1e-10;

/// Regularized incomplete gamma pair `(P(a, x), Q(a, x))`.
///
/// The smaller of the two is computed directly (series for `x < a + 1`,
/// Lentz continued fraction otherwise) so tail values keep full precision.
pub fn regularized_gamma(a: f64, x: f64) -> (f64, f64) {
    debug_assert!(a > 0.0);
    if x <= 0.0 {
        return (0.0, 1.0);
    }
    if x.is_infinite() {
        return (1.0, 0.0);
    }
    let log_prefactor = a * libm::log(x) - x - libm::lgamma(a);
    if x < a + 1.0 {
        let mut ap = a;
        let mut term = 1.0 / a;
        let mut sum = term;
        for _ in 0..MAX_ITER {
            ap += 1.0;
            term *= x / ap;
            sum += term;
            if term.abs() < sum.abs() * EPS {
                break;
            }
        }
        let p = (sum * libm::exp(log_prefactor)).min(1.0);
        (p, 1.0 - p)
    } else {
        let tiny = f64::MIN_POSITIVE / EPS;
        let mut b = x + 1.0 - a;
        let mut c = 1.0 / tiny;
        let mut d = 1.0 / b;
        let mut h = d;
        for i in 1..MAX_ITER {
            let an = -(i as f64) * (i as f64 - a);
            b += 2.0;
            d = an * d + b;
            if d.abs() < tiny {
                d = tiny;
            }
            c = b + an / c;
            if c.abs() < tiny {
                c = tiny;
            }
            d = 1.0 / d;
            let delta = d * c;
            h *= delta;
            if (delta - 1.0).abs() < EPS {
                break;
            }
        }
        let q = (libm::exp(log_prefactor) * h).min(1.0);
        (1.0 - q, q)
    }
}

/// `Pr[Y <= x]` for `Y ~ chi2(k)`.
pub fn chi2_cdf(x: f64, k: u32) -> f64 {
    regularized_gamma(f64::from(k) / 2.0, x / 2.0).0
}

/// Upper tail `Pr[Y > x]` for `Y ~ chi2(k)`.
pub fn chi2_sf(x: f64, k: u32) -> f64 {
    regularized_gamma(f64::from(k) / 2.0, x / 2.0).1
}

pub fn chi2_pdf(x: f64, k: u32) -> f64 {
    if x < 0.0 {
        return 0.0;
    }
    let half = f64::from(k) / 2.0;
    if x == 0.0 {
        return match k {
            1 => f64::INFINITY,
            2 => 0.5,
            _ => 0.0,
        };
    }
    libm::exp((half - 1.0) * libm::log(x) - x / 2.0 - half * core::f64::consts::LN_2 - libm::lgamma(half))
}

/// Upper quantile `chi2_alpha(k)`: the `x >= 0` with `Pr[Y > x] = alpha`.
///
/// Bisection brackets the root, then Newton steps (guarded by the bracket)
/// polish it until the tail residual is below `1e-10` and the step stalls.
pub fn chi2_quantile(alpha: f64, k: u32) -> Result<f64> {
    ensure(alpha > 0.0 && alpha <= 1.0, "alpha must lie in (0, 1]")?;
    ensure(k > 0, "degrees of freedom must be positive")?;
    if alpha == 1.0 {
        return Ok(0.0);
    }
    let residual = |x: f64| chi2_sf(x, k) - alpha;

    let mut lo = 0.0;
    let mut hi = f64::from(k).max(1.0);
    while residual(hi) > 0.0 {
        lo = hi;
        hi *= 2.0;
    }
    // Coarse bisection; sf is strictly decreasing so residual(lo) > 0 >= residual(hi).
    for _ in 0..200 {
        if hi - lo <= 1e-6 * hi.max(1.0) {
            break;
        }
        let mid = 0.5 * (lo + hi);
        if residual(mid) > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }

    let mut x = 0.5 * (lo + hi);
    for _ in 0..100 {
        let r = residual(x);
        if r > 0.0 {
            lo = lo.max(x);
        } else {
            hi = hi.min(x);
        }
        let slope = -chi2_pdf(x, k);
        let mut next = if slope != 0.0 && slope.is_finite() { x - r / slope } else { 0.5 * (lo + hi) };
        if !(next > lo && next < hi) {
            next = 0.5 * (lo + hi);
        }
        let step = (next - x).abs();
        x = next;
        if step <= 4.0 * f64::EPSILON * x.max(f64::MIN_POSITIVE) && r.abs() < CDF_TOLERANCE {
            break;
        }
    }
    Ok(x)
}
