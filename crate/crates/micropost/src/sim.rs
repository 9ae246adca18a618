//! Parallel drivers around the core simulations.
//!
//! Monte Carlo work is split into the core's counter-addressed pulse blocks.
//! Blocks run on the rayon pool and are merged in block order, so results do
//! not depend on the number of worker threads.

use micropost_core::analysis::{decay_curve, fit_lifetime, window_sensitivity, DecayCurve, G2Report, LifetimeFit};
use micropost_core::cavity::{
    find_resonance, reflectance, reflectance_spectrum, LayerStack, ReflectanceSpectrum, ResonanceOptions,
    ResonanceResult, SPACER_LABEL,
};
use micropost_core::fdtd::{
    discretize_stack, run_reflectance_with, run_ringdown_with, ReflectanceOptions, RingdownOptions, RingdownRecord,
};
use micropost_core::hbt::{
    correlate, detect_block, merge_blocks, streak, ChainConfig, Clicks, CorrelationHistogram, StreakHistogram,
};
use micropost_core::purcell::{decay_rate, detuning_at_temperature, PurcellError};
use micropost_core::rng::derive_seed;
use micropost_core::source::{emit_block, pulse_states, EmissionEvent, SourceConfig};
use rayon::prelude::*;

use crate::config::{ExperimentConfig, StatisticsKind};
use crate::error::SimError;

/// Click streams of the whole chain.
pub fn simulate_clicks(cfg: &ChainConfig) -> Clicks {
    let states = pulse_states(&cfg.source);
    let blocks: Vec<Clicks> =
        (0..cfg.source.n_blocks()).into_par_iter().map(|b| detect_block(cfg, &states, b)).collect();
    merge_blocks(cfg, blocks)
}

/// Emission event stream.
pub fn run_emission(cfg: &SourceConfig) -> Vec<EmissionEvent> {
    let states = pulse_states(cfg);
    let blocks: Vec<Vec<EmissionEvent>> =
        (0..cfg.n_blocks()).into_par_iter().map(|b| emit_block(cfg, &states, b)).collect();
    blocks.into_iter().flatten().collect()
}

/// Streak histogram of the emission, accumulated per block.
pub fn emission_streak(cfg: &SourceConfig, bin_width_ns: f64, irf_fwhm_ns: f64) -> Result<StreakHistogram, SimError> {
    let states = pulse_states(cfg);
    let period = cfg.train.period_ns;
    let parts: Vec<StreakHistogram> = (0..cfg.n_blocks())
        .into_par_iter()
        .map(|b| streak(&emit_block(cfg, &states, b), period, bin_width_ns, irf_fwhm_ns))
        .collect::<Result<_, _>>()?;
    let mut total = StreakHistogram::empty(period, bin_width_ns, irf_fwhm_ns)?;
    for p in &parts {
        total.merge(p)?;
    }
    Ok(total)
}

pub fn source_config(cfg: &ExperimentConfig, seed: u64, n_pulses: u64, gamma: Option<f64>) -> SourceConfig {
    SourceConfig {
        train: cfg.train(n_pulses),
        blinking: cfg.blinking(),
        emission: gamma.map_or_else(|| cfg.emission(), |g| cfg.emission_with_gamma(g)),
        seed,
    }
}

pub fn chain_config(cfg: &ExperimentConfig, seed: u64, n_pulses: u64) -> ChainConfig {
    let (det1, det2) = cfg.detectors();
    ChainConfig { source: source_config(cfg, seed, n_pulses, None), det1, det2 }
}

pub struct HbtRun {
    pub clicks: Clicks,
    pub histogram: CorrelationHistogram,
    /// One report per configured window, in config order.
    pub reports: Vec<G2Report>,
}

/// Source, beamsplitter, detectors, correlator and analysis.
pub fn run_hbt(cfg: &ExperimentConfig, seed: u64, n_pulses: u64) -> Result<HbtRun, SimError> {
    let chain = chain_config(cfg, seed, n_pulses);
    let clicks = simulate_clicks(&chain);
    let histogram = correlate(&clicks.det1, &clicks.det2, &cfg.histogram_spec())?;
    let reports = analyze_histogram(cfg, &histogram)?;
    Ok(HbtRun { clicks, histogram, reports })
}

pub fn analyze_histogram(cfg: &ExperimentConfig, hist: &CorrelationHistogram) -> Result<Vec<G2Report>, SimError> {
    let a = &cfg.analysis;
    window_sensitivity(hist, cfg.train.period_ns, &a.windows_ns, a.k_max, cfg.g2_options())
        .into_iter()
        .map(|r| r.map_err(SimError::from))
        .collect()
}

pub struct CrossCheck {
    pub fdtd: ReflectanceSpectrum,
    /// Transfer-matrix reflectance of the grid-snapped stack at the FDTD
    /// wavelengths.
    pub tmm_snapped: Vec<f64>,
    pub stopband_rms: f64,
    pub q_fdtd: f64,
    pub ringdown: RingdownRecord,
}

pub struct CavityRun {
    pub stack: LayerStack,
    pub spectrum: ReflectanceSpectrum,
    pub resonance: ResonanceResult,
    pub cross_check: Option<CrossCheck>,
}

pub fn run_cavity(cfg: &ExperimentConfig, with_cross_check: bool) -> Result<CavityRun, SimError> {
    let stack = cfg.stack()?;
    let sp = &cfg.spectrum;
    let spectrum = reflectance_spectrum(&stack, sp.min_nm, sp.max_nm, sp.samples)?;
    let resonance = find_resonance(&spectrum, ResonanceOptions { stopband_threshold: sp.stopband_threshold })?;
    let cross_check = if with_cross_check { Some(cross_check(cfg, &stack, &resonance)?) } else { None };
    Ok(CavityRun { stack, spectrum, resonance, cross_check })
}

/// FDTD reflectance and ringdown of the same stack, run side by side.
pub fn cross_check(cfg: &ExperimentConfig, stack: &LayerStack, res: &ResonanceResult) -> Result<CrossCheck, SimError> {
    let f = &cfg.fdtd;
    let grid = discretize_stack(stack, f.dx_nm)?;
    let center = f.center_nm.unwrap_or(0.5 * (res.stopband_nm.0 + res.stopband_nm.1));
    let source = grid.layer_center_cell(SPACER_LABEL).unwrap_or_else(|| {
        let r = grid.stack_cells();
        (r.start + r.end) / 2
    });
    let ro = ReflectanceOptions { tolerance: f.tolerance, samples: f.samples, ..Default::default() };
    let rdo = RingdownOptions {
        bandwidth_nm: f.ringdown_bandwidth_nm,
        settle_steps: f.settle_steps,
        record_steps: f.record_steps,
    };
    let (fdtd, ring) = rayon::join(
        || run_reflectance_with(&grid, center, f.bandwidth_nm, ro),
        || run_ringdown_with(&grid, source, res.lambda_c_nm, rdo),
    );
    let fdtd = fdtd?;
    let (q_fdtd, ringdown) = ring?;
    let tmm_snapped =
        fdtd.wavelengths_nm.iter().map(|&l| reflectance(grid.snapped_stack(), l)).collect::<Result<Vec<_>, _>>()?;
    let (lo, hi) = res.stopband_nm;
    let (sum, n) = fdtd
        .iter()
        .zip(&tmm_snapped)
        .filter(|((l, _), _)| *l >= lo && *l <= hi)
        .fold((0.0, 0usize), |(s, n), ((_, a), b)| (s + (a - b) * (a - b), n + 1));
    let stopband_rms = if n == 0 { f64::NAN } else { (sum / n as f64).sqrt() };
    Ok(CrossCheck { fdtd, tmm_snapped, stopband_rms, q_fdtd, ringdown })
}

pub struct SweepRun {
    /// Signed detuning of each point.
    pub detunings_nm: Vec<f64>,
    pub streaks: Vec<StreakHistogram>,
    pub curve: DecayCurve,
}

pub fn sweep_detunings(cfg: &ExperimentConfig) -> Result<Vec<f64>, SimError> {
    match (&cfg.sweep.temperatures_k, cfg.tuning_map()) {
        (Some(temps), Some(map)) => {
            let map = map?;
            Ok(temps.iter().map(|&t| detuning_at_temperature(&map, t)).collect::<Result<_, _>>()?)
        }
        _ => Ok(cfg.sweep.detunings_nm.clone()),
    }
}

/// One streak per detuning, then lifetimes and the Lorentzian fit.
pub fn lifetime_sweep(cfg: &ExperimentConfig, seed: u64, pulses_per_point: u64) -> Result<SweepRun, SimError> {
    let detunings = sweep_detunings(cfg)?;
    if detunings.len() < 4 {
        return Err(PurcellError::InsufficientSpan("a lifetime sweep needs at least 4 detunings").into());
    }
    let model = cfg.decay_model();
    let lc = model.mode.lambda_c_nm;
    let mut runs = Vec::with_capacity(detunings.len());
    for (i, &d) in detunings.iter().enumerate() {
        let gamma = decay_rate(lc + d, &model);
        let src = source_config(cfg, derive_seed(seed, i as u64), pulses_per_point, Some(gamma));
        runs.push((d, emission_streak(&src, cfg.streak.bin_width_ns, cfg.streak.irf_fwhm_ns)?));
    }
    let curve = decay_curve(&runs, lc, cfg.analysis.fit_start_offset_ns)?;
    let streaks = runs.into_iter().map(|(_, s)| s).collect();
    Ok(SweepRun { detunings_nm: detunings, streaks, curve })
}

/// Lifetimes at the on- and off-resonance rates `Γmax` and `Γmin`.
pub fn lifetime_pair(cfg: &ExperimentConfig, seed: u64, n_pulses: u64) -> Result<(LifetimeFit, LifetimeFit), SimError> {
    let m = cfg.decay_model();
    let fit = |gamma: f64, tag: u64| -> Result<LifetimeFit, SimError> {
        let src = source_config(cfg, derive_seed(seed, tag), n_pulses, Some(gamma));
        let s = emission_streak(&src, cfg.streak.bin_width_ns, cfg.streak.irf_fwhm_ns)?;
        Ok(fit_lifetime(&s, cfg.analysis.fit_start_offset_ns)?)
    };
    Ok((fit(m.gamma_max, 0)?, fit(m.gamma_min, 1)?))
}

#[derive(Debug, Clone, PartialEq)]
pub struct Calibration {
    pub p2: f64,
    pub g2: f64,
    pub g2_err: f64,
    /// Every evaluated `(p2, g2)`, in order.
    pub steps: Vec<(f64, f64)>,
}

/// Bisection on `p2` until the simulated g²(0) at the headline window is
/// within `tolerance` of `target`.
///
/// Every evaluation uses the same seed, so the simulated curve is smooth in
/// `p2`. The bracket is `[0, min(1 − p1, p1/2)]`: beyond `p1/2` the two-photon
/// fraction `2p2/(p1 + 2p2)²` decreases again.
pub fn calibrate_p2(
    cfg: &ExperimentConfig,
    seed: u64,
    n_pulses: u64,
    target: f64,
    tolerance: f64,
    max_iterations: usize,
) -> Result<Calibration, SimError> {
    let mut base = cfg.clone();
    base.emission.statistics = StatisticsKind::Truncated;
    let mut steps = Vec::new();
    let mut eval = |p2: f64| -> Result<(f64, f64), SimError> {
        let mut c = base.clone();
        c.emission.p2 = p2;
        let r = &run_hbt(&c, seed, n_pulses)?.reports[0];
        steps.push((p2, r.g2_zero));
        Ok((r.g2_zero, r.g2_zero_err))
    };
    let done = |p2: f64, (g2, g2_err): (f64, f64), steps: &mut Vec<(f64, f64)>| Calibration {
        p2,
        g2,
        g2_err,
        steps: std::mem::take(steps),
    };

    if target == 0.0 {
        let g = eval(0.0)?;
        return Ok(done(0.0, g, &mut steps));
    }
    let p1 = base.emission.p1;
    let (mut lo, mut hi) = (0.0, (1.0 - p1).min(p1 / 2.0));
    let g_lo = eval(lo)?;
    let g_hi = eval(hi)?;
    if (g_lo.0 - target).abs() < tolerance {
        return Ok(done(lo, g_lo, &mut steps));
    }
    if (g_hi.0 - target).abs() < tolerance {
        return Ok(done(hi, g_hi, &mut steps));
    }
    if !(g_lo.0 < target && target < g_hi.0) {
        return Err(SimError::NonBracketing { target, lo, hi, g_lo: g_lo.0, g_hi: g_hi.0 });
    }
    let mut last = (hi, g_hi);
    for _ in 0..max_iterations {
        let mid = 0.5 * (lo + hi);
        let g = eval(mid)?;
        if (g.0 - target).abs() < tolerance {
            return Ok(done(mid, g, &mut steps));
        }
        if g.0 < target {
            lo = mid;
        } else {
            hi = mid;
        }
        last = (mid, g);
    }
    Err(SimError::NotConverged { iterations: max_iterations, p2: last.0, g2: last.1 .0 })
}
