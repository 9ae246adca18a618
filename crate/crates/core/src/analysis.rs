//! Estimators applied to correlation and decay histograms.
//!
//! Peak areas are integrated over a window centred on each multiple of the
//! repetition period with fractional weight for bins cut by a window edge.
//! The asymptotic side-peak area comes from a two-sided exponential fit of
//! the side peaks, `A(k) = a∞·(1 + β·exp(−|k|·T/τ_b))`.

use alloc::vec::Vec;

use thiserror::Error;

use crate::fit;
use crate::hbt::{CorrelationHistogram, StreakHistogram};
use crate::purcell::{self, DecayFit, PurcellError};
use crate::special;
use crate::FWHM_PER_SIGMA;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum AnalysisError {
    #[error("integration window {window_ns} ns exceeds the period {period_ns} ns")]
    WindowExceedsPeriod { window_ns: f64, period_ns: f64 },
    #[error("peaks up to ±{needed_ns} ns requested but the histogram covers ±{available_ns} ns")]
    RangeExceeded { needed_ns: f64, available_ns: f64 },
    #[error("need at least {needed} side peaks per sign, got {got}")]
    InsufficientPeaks { needed: usize, got: usize },
    #[error("fit diverged: {0}")]
    FitDiverged(&'static str),
    #[error("histogram has no peak")]
    NoPeak,
    #[error("invalid input: {0}")]
    InvalidInput(&'static str),
    #[error(transparent)]
    Decay(#[from] PurcellError),
}

/// Integrated peak areas for `k ∈ [−k_max, k_max]`.
#[derive(Debug, Clone, PartialEq)]
pub struct PeakAreas {
    pub window_ns: f64,
    pub period_ns: f64,
    pub k_max: usize,
    /// Indexed by `k + k_max`.
    pub areas: Vec<f64>,
}

impl PeakAreas {
    pub fn area(&self, k: i64) -> f64 {
        self.areas[(k + self.k_max as i64) as usize]
    }

    pub fn iter(&self) -> impl Iterator<Item = (i64, f64)> + '_ {
        let k_max = self.k_max as i64;
        self.areas.iter().enumerate().map(move |(i, &a)| (i as i64 - k_max, a))
    }

    pub fn total(&self) -> f64 {
        self.areas.iter().sum()
    }
}

/// Counts of `hist` on `[a, b)`, with partial bins weighted by overlap.
pub fn integrate_range(hist: &CorrelationHistogram, a: f64, b: f64) -> f64 {
    let w = hist.bin_width_ns;
    let n = hist.counts.len();
    let lo = ((a + hist.range_ns) / w).floor().max(0.0) as usize;
    let hi = (((b + hist.range_ns) / w).ceil().max(0.0) as usize).min(n);
    let mut sum = 0.0;
    for i in lo..hi {
        let (x0, x1) = (hist.bin_start(i), hist.bin_start(i + 1));
        let overlap = (x1.min(b) - x0.max(a)).max(0.0);
        if overlap > 0.0 {
            sum += hist.counts[i] as f64 * (overlap / w).min(1.0);
        }
    }
    sum
}

/// Sums counts in `[k·T − W/2, k·T + W/2]` for every `|k| ≤ k_max`. No
/// background is subtracted.
pub fn integrate_peaks(
    hist: &CorrelationHistogram,
    period_ns: f64,
    window_ns: f64,
    k_max: usize,
) -> Result<PeakAreas, AnalysisError> {
    if !(period_ns > 0.0) || !(window_ns > 0.0) || !period_ns.is_finite() {
        return Err(AnalysisError::InvalidInput("period and window must be positive"));
    }
    if window_ns > period_ns {
        return Err(AnalysisError::WindowExceedsPeriod { window_ns, period_ns });
    }
    let needed = k_max as f64 * period_ns + window_ns / 2.0;
    let available = hist.range_ns.min(hist.upper_edge());
    if needed > available * (1.0 + 1e-12) {
        return Err(AnalysisError::RangeExceeded { needed_ns: needed, available_ns: available });
    }
    let k = k_max as i64;
    let areas = (-k..=k)
        .map(|k| {
            let c = k as f64 * period_ns;
            integrate_range(hist, c - window_ns / 2.0, c + window_ns / 2.0)
        })
        .collect();
    Ok(PeakAreas { window_ns, period_ns, k_max, areas })
}

/// Two-sided exponential envelope of the side peaks.
#[derive(Debug, Clone, PartialEq)]
pub struct EnvelopeFit {
    pub a_inf: f64,
    pub beta: f64,
    pub tau_b_ns: f64,
    pub period_ns: f64,
    /// Standard errors of `(a_inf, beta, tau_b)` from Poisson weights; `None`
    /// when the fit sits on the `β = 0` boundary.
    pub std_errors: Option<[f64; 3]>,
    /// `(k, data − model)` for every fitted peak.
    pub residuals: Vec<(i64, f64)>,
    /// Weighted residual sum of squares over the pair means (≈ χ²).
    pub chi2: f64,
}

impl EnvelopeFit {
    pub fn model(&self, k: i64) -> f64 {
        self.a_inf * (1.0 + self.beta * (-(k.unsigned_abs() as f64) * self.period_ns / self.tau_b_ns).exp())
    }
}

pub const MIN_SIDE_PEAKS: usize = 4;

/// Significance level for keeping the bunching term.
pub const ENVELOPE_LEVEL: f64 = 0.01;

/// Weighted least-squares fit of `A(k) = a∞(1 + β e^{−|k|T/τ_b})`.
///
/// The model is symmetric, so it is fitted to the mean of the `±k` pair at
/// each `|k|`. This also cancels the first-order slope that start–stop
/// conversion puts across the histogram. Weights are Poisson, `n²/ΣA` for a
/// mean over `n` peaks.
///
/// For a fixed `τ_b` the model is linear in `a∞` and `a∞β`, so only `τ_b` is
/// searched, over `[0.1 T, K T]`: beyond the span of the fitted peaks the
/// asymptote cannot be told apart from the bunching term. `β ≥ 0`.
///
/// Over a few peaks the bunching term is close to a constant, so noise on
/// flat data is readily absorbed into it and drags `a∞` down. The envelope is
/// kept only if it lowers χ² by more than `−2 ln(level)` (two extra
/// parameters) at [`ENVELOPE_LEVEL`]; otherwise `β = 0` and `a∞` is the
/// weighted mean.
pub fn fit_envelope(areas: &PeakAreas, exclude_center: bool) -> Result<EnvelopeFit, AnalysisError> {
    if areas.k_max < MIN_SIDE_PEAKS {
        return Err(AnalysisError::InsufficientPeaks { needed: MIN_SIDE_PEAKS, got: areas.k_max });
    }
    let period = areas.period_ns;
    if areas.areas.iter().any(|a| !(*a >= 0.0) || !a.is_finite()) {
        return Err(AnalysisError::InvalidInput("peak areas must be finite and non-negative"));
    }
    let k_max = areas.k_max as i64;
    let first = if exclude_center { 1 } else { 0 };
    // (|k|, pair mean, weight)
    let pts: Vec<(i64, f64, f64)> = (first..=k_max)
        .map(|k| {
            let (sum, n) = if k == 0 { (areas.area(0), 1.0) } else { (areas.area(k) + areas.area(-k), 2.0) };
            (k, sum / n, n * n / sum.max(1.0))
        })
        .collect();
    let y: Vec<f64> = pts.iter().map(|p| p.1).collect();
    let weights: Vec<f64> = pts.iter().map(|p| p.2).collect();
    let wsum: f64 = weights.iter().sum();
    let flat = weights.iter().zip(&y).map(|(w, y)| w * y).sum::<f64>() / wsum;
    if !(flat > 0.0) {
        return Err(AnalysisError::FitDiverged("side peaks are empty"));
    }
    let decay = |k: i64, tau: f64| (-(k.unsigned_abs() as f64) * period / tau).exp();
    let chi2_of = |a: f64, b: f64, tau: f64| -> f64 {
        pts.iter()
            .map(|&(k, yk, w)| {
                let e = a + b * decay(k, tau) - yk;
                w * e * e
            })
            .sum()
    };
    // Best (a, b) for a fixed τ_b with a > 0 and b ≥ 0.
    let solve = |tau: f64| -> (f64, f64) {
        let rows: Vec<[f64; 2]> = pts.iter().map(|&(k, _, _)| [1.0, decay(k, tau)]).collect();
        match fit::linear_lsq(&rows, &y, &weights) {
            Some(([a, b], _)) if a > 0.0 && b > 0.0 && a.is_finite() && b.is_finite() => (a, b),
            _ => (flat, 0.0),
        }
    };
    let (tau, _) = fit::log_scan_min(
        |tau| {
            let (a, b) = solve(tau);
            chi2_of(a, b, tau)
        },
        0.1 * period,
        k_max as f64 * period,
        241,
    );
    let (mut a, mut b) = solve(tau);
    if b > 0.0 && chi2_of(flat, 0.0, tau) - chi2_of(a, b, tau) <= -2.0 * libm::log(ENVELOPE_LEVEL) {
        (a, b) = (flat, 0.0);
    }
    if !(a > 0.0) {
        return Err(AnalysisError::FitDiverged("asymptotic area is not positive"));
    }
    let beta = b / a;
    let std_errors = if beta > 0.0 {
        let mut jtj = [[0.0; 3]; 3];
        for &(k, _, w) in &pts {
            let kt = k.unsigned_abs() as f64 * period;
            let x = (-kt / tau).exp();
            let g = [1.0 + beta * x, a * x, a * beta * x * kt / (tau * tau)];
            for (i, gi) in g.iter().enumerate() {
                for (j, gj) in g.iter().enumerate() {
                    jtj[i][j] += w * gi * gj;
                }
            }
        }
        fit::invert(jtj).map(|inv| [0, 1, 2].map(|i| inv[i][i].max(0.0).sqrt()))
    } else {
        None
    };
    let residuals = areas
        .iter()
        .filter(|&(k, _)| k.unsigned_abs() as i64 >= first)
        .map(|(k, yk)| (k, yk - a - b * decay(k, tau)))
        .collect();
    Ok(EnvelopeFit {
        a_inf: a,
        beta,
        tau_b_ns: tau,
        period_ns: period,
        std_errors,
        residuals,
        chi2: chi2_of(a, b, tau),
    })
}

/// Where the asymptotic side-peak area is taken from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum AInfSource {
    /// The envelope fit.
    #[default]
    Fit,
    /// Mean of the `n` outermost peaks on each side.
    FarthestPeaks(usize),
}

/// Which side peaks define `g`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Nearest {
    /// Mean of `k = ±1`.
    #[default]
    Symmetric,
    /// `k = +1` only.
    PositiveOnly,
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct G2Options {
    pub a_inf: AInfSource,
    pub nearest: Nearest,
}

/// Zero-delay estimators for one integration window.
#[derive(Debug, Clone, PartialEq)]
pub struct G2Report {
    pub window_ns: f64,
    pub a0: f64,
    pub a1: f64,
    pub a_inf: f64,
    pub g2_zero: f64,
    pub g_nearest: f64,
    pub a0_err: f64,
    pub a1_err: f64,
    pub a_inf_err: f64,
    pub g2_zero_err: f64,
    pub g_nearest_err: f64,
    pub envelope: EnvelopeFit,
}

fn ratio_err(num: f64, num_err: f64, den: f64, den_err: f64) -> f64 {
    let a = num_err / den;
    let b = num * den_err / (den * den);
    (a * a + b * b).sqrt()
}

/// `g²(0) = A₀/a∞` and `g = A₀/A₁` with Poisson errors.
pub fn g2_zero(areas: &PeakAreas, envelope: &EnvelopeFit, options: G2Options) -> Result<G2Report, AnalysisError> {
    if areas.k_max < 1 {
        return Err(AnalysisError::InsufficientPeaks { needed: 1, got: 0 });
    }
    let a0 = areas.area(0);
    let (a1, a1_err) = match options.nearest {
        Nearest::Symmetric => {
            let s = areas.area(-1) + areas.area(1);
            (s / 2.0, s.max(1.0).sqrt() / 2.0)
        }
        Nearest::PositiveOnly => (areas.area(1), areas.area(1).max(1.0).sqrt()),
    };
    let (a_inf, a_inf_err) = match options.a_inf {
        AInfSource::Fit => {
            let err = match envelope.std_errors {
                Some(e) => e[0],
                None => {
                    // β = 0: a∞ is the weighted mean of the fitted side peaks.
                    let n = envelope.residuals.len().max(1) as f64;
                    (envelope.a_inf / n).sqrt()
                }
            };
            (envelope.a_inf, err)
        }
        AInfSource::FarthestPeaks(n) => {
            if n == 0 || n > areas.k_max {
                return Err(AnalysisError::InvalidInput("farthest-peak count out of range"));
            }
            let k = areas.k_max as i64;
            let sum: f64 = (0..n as i64).map(|j| areas.area(k - j) + areas.area(-k + j)).sum();
            let m = 2.0 * n as f64;
            (sum / m, sum.max(1.0).sqrt() / m)
        }
    };
    if !(a_inf > 0.0) {
        return Err(AnalysisError::FitDiverged("asymptotic area is not positive"));
    }
    if !(a1 > 0.0) {
        return Err(AnalysisError::InvalidInput("nearest side peak is empty"));
    }
    let a0_err = a0.max(1.0).sqrt();
    Ok(G2Report {
        window_ns: areas.window_ns,
        a0,
        a1,
        a_inf,
        g2_zero: a0 / a_inf,
        g_nearest: a0 / a1,
        a0_err,
        a1_err,
        a_inf_err,
        g2_zero_err: ratio_err(a0, a0_err, a_inf, a_inf_err),
        g_nearest_err: ratio_err(a0, a0_err, a1, a1_err),
        envelope: envelope.clone(),
    })
}

/// Integration, envelope fit and ratio estimators in one call.
pub fn analyze(
    hist: &CorrelationHistogram,
    period_ns: f64,
    window_ns: f64,
    k_max: usize,
    options: G2Options,
) -> Result<G2Report, AnalysisError> {
    let areas = integrate_peaks(hist, period_ns, window_ns, k_max)?;
    let env = fit_envelope(&areas, true)?;
    g2_zero(&areas, &env, options)
}

/// [`analyze`] for each window; failures are reported per window.
pub fn window_sensitivity(
    hist: &CorrelationHistogram,
    period_ns: f64,
    windows_ns: &[f64],
    k_max: usize,
    options: G2Options,
) -> Vec<Result<G2Report, AnalysisError>> {
    windows_ns.iter().map(|&w| analyze(hist, period_ns, w, k_max, options)).collect()
}

/// Fraction of a side peak falling outside a window of width `window_ns`,
/// for exponential emission of lifetime `tau_ns` and per-detector Gaussian
/// jitter `sigma_ns`. The delay is Laplace(τ) plus N(0, 2σ²).
pub fn window_tail_fraction(window_ns: f64, tau_ns: f64, sigma_ns: f64) -> f64 {
    2.0 * special::laplace_gauss_sf(window_ns / 2.0, tau_ns, core::f64::consts::SQRT_2 * sigma_ns)
}

/// RMS width of a side peak for the same model.
pub fn side_peak_rms(tau_ns: f64, sigma_ns: f64) -> f64 {
    (2.0 * sigma_ns * sigma_ns + 2.0 * tau_ns * tau_ns).sqrt()
}

pub const DEFAULT_FIT_START_OFFSET_NS: f64 = 0.05;

/// Result of a lifetime fit.
#[derive(Debug, Clone, PartialEq)]
pub struct LifetimeFit {
    pub tau_ns: f64,
    pub amplitude: f64,
    /// Onset of the decay; only fitted by the IRF-convolved model.
    pub t0_ns: Option<f64>,
    pub irf_convolved: bool,
    /// `(t, data − model)` over the fitted range, times unwrapped from the
    /// peak bin.
    pub residuals: Vec<(f64, f64)>,
}

/// Single-exponential lifetime fit of a folded decay histogram.
///
/// The tail is fitted starting `fit_start_offset_ns` after the peak bin. If
/// that lifetime is shorter than four IRF widths the full trace is refitted
/// with an exponential convolved with the Gaussian IRF.
pub fn fit_lifetime(streak: &StreakHistogram, fit_start_offset_ns: f64) -> Result<LifetimeFit, AnalysisError> {
    let n = streak.counts.len();
    let total = streak.total();
    if n < 4 || !(total > 0.0) {
        return Err(AnalysisError::NoPeak);
    }
    if !(fit_start_offset_ns >= 0.0) {
        return Err(AnalysisError::InvalidInput("fit start offset must be non-negative"));
    }
    let bw = streak.bin_width_ns;
    let period = streak.period_ns;
    let peak = streak
        .counts
        .iter()
        .enumerate()
        .max_by(|a, b| a.1.total_cmp(b.1))
        .map(|(i, _)| i)
        .ok_or(AnalysisError::NoPeak)?;
    let sigma = streak.irf_fwhm_ns / FWHM_PER_SIGMA;
    // Unwrapped time and count of the j-th bin after the peak.
    let at = |j: usize| -> (f64, f64) {
        let i = peak + j;
        (streak.bin_center(i % n) + period * (i / n) as f64, streak.counts[i % n])
    };
    let t_peak = streak.bin_center(peak);
    let guard = ((6.0 * sigma / bw).ceil() as usize).max(2);
    let start = (fit_start_offset_ns / bw).ceil() as usize;
    if start + 3 + guard >= n {
        return Err(AnalysisError::InvalidInput("fit start offset leaves no tail"));
    }
    let tail: Vec<(f64, f64)> = (start..n - guard).map(at).collect();
    let t_s = tail[0].0;

    // Starting point from a log-linear fit over the first decade.
    let y0 = tail[0].1;
    let decade: Vec<(f64, f64)> = tail.iter().copied().take_while(|p| p.1 > 0.1 * y0).collect();
    let tau0 = if decade.len() >= 3 && y0 > 0.0 {
        let rows: Vec<[f64; 2]> = decade.iter().map(|p| [1.0, p.0 - t_s]).collect();
        let ly: Vec<f64> = decade.iter().map(|p| p.1.ln()).collect();
        let w: Vec<f64> = decade.iter().map(|p| p.1).collect();
        match fit::linear_lsq(&rows, &ly, &w) {
            Some(([_, s], _)) if s < 0.0 => -1.0 / s,
            _ => 1.0,
        }
    } else {
        let mean_t = tail.iter().map(|p| (p.0 - t_s) * p.1).sum::<f64>() / tail.iter().map(|p| p.1).sum::<f64>();
        if mean_t > 0.0 {
            mean_t
        } else {
            return Err(AnalysisError::FitDiverged("no decaying tail"));
        }
    };
    let out = fit::levenberg_marquardt(
        [y0.max(1e-300), tau0],
        tail.len(),
        |p, r, jac| {
            let (a, tau) = (p[0], p[1]);
            for (i, &(t, y)) in tail.iter().enumerate() {
                let e = (-(t - t_s) / tau).exp();
                r[i] = a * e - y;
                jac[i] = [e, a * e * (t - t_s) / (tau * tau)];
            }
        },
        300,
    )
    .ok_or(AnalysisError::FitDiverged("non-finite residuals in tail fit"))?;
    let [amp, tau] = out.params;
    if !(tau > 0.0) || !tau.is_finite() || !(amp > 0.0) {
        return Err(AnalysisError::FitDiverged("tail fit left the physical domain"));
    }

    if streak.irf_fwhm_ns > 0.0 && tau < 4.0 * streak.irf_fwhm_ns {
        return fit_lifetime_convolved(streak, peak, sigma, tau, t_peak);
    }
    let residuals = tail.iter().map(|&(t, y)| (t, y - amp * (-(t - t_s) / tau).exp())).collect();
    Ok(LifetimeFit { tau_ns: tau, amplitude: amp, t0_ns: None, irf_convolved: false, residuals })
}

fn fit_lifetime_convolved(
    streak: &StreakHistogram,
    peak: usize,
    sigma: f64,
    tau_start: f64,
    t_peak: f64,
) -> Result<LifetimeFit, AnalysisError> {
    let n = streak.counts.len();
    let bw = streak.bin_width_ns;
    let period = streak.period_ns;
    // One full period starting a few IRF widths before the peak.
    let lead = ((6.0 * sigma + 2.0 * tau_start) / bw).ceil() as usize;
    let lead = lead.min(n / 4);
    let first = peak + n - lead;
    let pts: Vec<(f64, f64)> = (0..n)
        .map(|j| {
            let i = first + j;
            let t = streak.bin_center(i % n) + period * (i / n) as f64 - period;
            (t, streak.counts[i % n])
        })
        .collect();
    // Folding adds the tails of earlier periods.
    let model = |t: f64, t0: f64, tau: f64| -> f64 {
        (0..4).map(|m| special::exp_gauss_density(t + m as f64 * period, t0, tau, sigma)).sum::<f64>()
    };
    let total: f64 = pts.iter().map(|p| p.1).sum();
    let p0 = [total * bw, t_peak - sigma, tau_start];
    let out = fit::levenberg_marquardt(
        p0,
        pts.len(),
        |p, r, jac| {
            let (a, t0, tau) = (p[0], p[1], p[2]);
            let (ht, htau) = (1e-6 * sigma.max(1e-6), 1e-6 * tau.abs().max(1e-9));
            for (i, &(t, y)) in pts.iter().enumerate() {
                let f = model(t, t0, tau);
                r[i] = a * f - y;
                let dt0 = (model(t, t0 + ht, tau) - model(t, t0 - ht, tau)) / (2.0 * ht);
                let dtau = (model(t, t0, tau + htau) - model(t, t0, tau - htau)) / (2.0 * htau);
                jac[i] = [f, a * dt0, a * dtau];
            }
        },
        300,
    )
    .ok_or(AnalysisError::FitDiverged("non-finite residuals in convolved fit"))?;
    let [a, t0, tau] = out.params;
    if !(tau > 0.0) || !tau.is_finite() || !(a > 0.0) {
        return Err(AnalysisError::FitDiverged("convolved fit left the physical domain"));
    }
    let residuals = pts.iter().map(|&(t, y)| (t, y - a * model(t, t0, tau))).collect();
    Ok(LifetimeFit { tau_ns: tau, amplitude: a, t0_ns: Some(t0), irf_convolved: true, residuals })
}

/// Per-run lifetimes turned into a decay-rate curve and a Lorentzian fit.
#[derive(Debug, Clone, PartialEq)]
pub struct DecayCurve {
    /// `(|detuning| nm, Γ ns⁻¹)` in input order.
    pub points: Vec<(f64, f64)>,
    pub lifetimes: Vec<LifetimeFit>,
    pub fit: DecayFit,
}

/// Fits each run's lifetime, folds detuning to `|δ|` and fits the decay model
/// with the centre fixed at `lambda_c_nm`.
pub fn decay_curve(
    runs: &[(f64, StreakHistogram)],
    lambda_c_nm: f64,
    fit_start_offset_ns: f64,
) -> Result<DecayCurve, AnalysisError> {
    let mut points = Vec::with_capacity(runs.len());
    let mut lifetimes = Vec::with_capacity(runs.len());
    for (detuning, hist) in runs {
        let lt = fit_lifetime(hist, fit_start_offset_ns)?;
        points.push((detuning.abs(), 1.0 / lt.tau_ns));
        lifetimes.push(lt);
    }
    let shifted: Vec<(f64, f64)> = points.iter().map(|&(d, g)| (lambda_c_nm + d, g)).collect();
    let fit = purcell::fit_decay_model(&shifted, lambda_c_nm)?;
    Ok(DecayCurve { points, lifetimes, fit })
}
