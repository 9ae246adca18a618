//! Special functions used by the fits and the analytic peak models.

use core::f64::consts::{FRAC_1_SQRT_2, SQRT_2};

/// Standard normal cumulative distribution function.
pub fn normal_cdf(x: f64) -> f64 {
    0.5 * libm::erfc(-x * FRAC_1_SQRT_2)
}

/// Upper tail of the standard normal, `1 - Φ(x)`, accurate for large `x`.
pub fn normal_sf(x: f64) -> f64 {
    0.5 * libm::erfc(x * FRAC_1_SQRT_2)
}

/// Probability mass of `N(mean, sigma²)` on `[a, b)`.
pub fn normal_interval(a: f64, b: f64, mean: f64, sigma: f64) -> f64 {
    if sigma <= 0.0 {
        return if mean >= a && mean < b { 1.0 } else { 0.0 };
    }
    let za = (a - mean) / sigma;
    let zb = (b - mean) / sigma;
    // Subtract in whichever tail keeps precision.
    if za > 0.0 {
        normal_sf(za) - normal_sf(zb)
    } else {
        normal_cdf(zb) - normal_cdf(za)
    }
}

/// Density of an exponential decay (rate `1/tau`) starting at `t0`, convolved
/// with a zero-mean Gaussian of width `sigma`. Integrates to one over `t`.
pub fn exp_gauss_density(t: f64, t0: f64, tau: f64, sigma: f64) -> f64 {
    let x = t - t0;
    if sigma <= 0.0 {
        return if x >= 0.0 { (-x / tau).exp() / tau } else { 0.0 };
    }
    let z = (sigma / tau - x / sigma) * FRAC_1_SQRT_2;
    let erfc = libm::erfc(z);
    if erfc == 0.0 {
        return 0.0;
    }
    let log = sigma * sigma / (2.0 * tau * tau) - x / tau;
    0.5 / tau * (log + erfc.ln()).exp()
}

/// Probability that `L + G` exceeds `w`, where `L` is Laplace with scale `b`
/// and `G ~ N(0, s²)`.
pub fn laplace_gauss_sf(w: f64, b: f64, s: f64) -> f64 {
    if s <= 0.0 {
        return if w >= 0.0 { 0.5 * (-w / b).exp() } else { 1.0 - 0.5 * (w / b).exp() };
    }
    let shift = s * s / (2.0 * b * b);
    let lower = 0.5 * (shift - w / b).exp() * normal_cdf(w / s - s / b);
    let upper = (shift + w / b + log_normal_sf(w / s + s / b)).exp();
    lower + normal_sf(w / s) - 0.5 * upper
}

/// `ln(1 - Φ(x))` without underflow for large positive `x`.
fn log_normal_sf(x: f64) -> f64 {
    if x < 30.0 {
        normal_sf(x).ln()
    } else {
        // Asymptotic Mills-ratio expansion.
        let x2 = x * x;
        let series = 1.0 - 1.0 / x2 + 3.0 / (x2 * x2) - 15.0 / (x2 * x2 * x2);
        -0.5 * x2 - (x * SQRT_2 * core::f64::consts::PI.sqrt()).ln() + series.ln()
    }
}
