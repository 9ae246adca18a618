//! Simulated Hanbury Brown–Twiss measurement chain.
//!
//! Photons are split by a 50/50 beamsplitter onto two counters with finite
//! efficiency, Gaussian timing jitter and non-paralyzable dead time. A
//! start–stop correlator (detector 1 starts, detector 2 stops) histograms the
//! delay `τ = t₂ − t₁`. The histogram window covers negative delays as a real
//! time-to-amplitude converter does when its stop line is delayed by the
//! histogram half-range.

use alloc::vec::Vec;

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use thiserror::Error;

use crate::rng::{self, Domain};
use crate::source::{self, EmissionEvent, SourceConfig};
use crate::special;
use crate::FWHM_PER_SIGMA;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum HbtError {
    #[error("invalid detector: {0}")]
    InvalidDetector(&'static str),
    #[error("invalid histogram specification: {0}")]
    InvalidHistogram(&'static str),
}

/// A single-photon counter.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DetectorModel {
    pub efficiency: f64,
    pub jitter_fwhm_ns: f64,
    pub dead_time_ns: f64,
    /// Flat dark-count rate in ns⁻¹.
    pub dark_rate_per_ns: f64,
}

impl Default for DetectorModel {
    fn default() -> Self {
        Self { efficiency: 1.0, jitter_fwhm_ns: 0.3, dead_time_ns: 50.0, dark_rate_per_ns: 0.0 }
    }
}

impl DetectorModel {
    pub fn new(
        efficiency: f64,
        jitter_fwhm_ns: f64,
        dead_time_ns: f64,
        dark_rate_per_ns: f64,
    ) -> Result<Self, HbtError> {
        if !(0.0..=1.0).contains(&efficiency) {
            return Err(HbtError::InvalidDetector("efficiency must lie in [0, 1]"));
        }
        if !(jitter_fwhm_ns >= 0.0) || !jitter_fwhm_ns.is_finite() {
            return Err(HbtError::InvalidDetector("jitter must be finite and non-negative"));
        }
        if !(dead_time_ns >= 0.0) || !dead_time_ns.is_finite() {
            return Err(HbtError::InvalidDetector("dead time must be finite and non-negative"));
        }
        if !(dark_rate_per_ns >= 0.0) || !dark_rate_per_ns.is_finite() {
            return Err(HbtError::InvalidDetector("dark rate must be finite and non-negative"));
        }
        Ok(Self { efficiency, jitter_fwhm_ns, dead_time_ns, dark_rate_per_ns })
    }

    /// Perfect counter apart from the given jitter.
    pub fn ideal(jitter_fwhm_ns: f64) -> Self {
        Self { efficiency: 1.0, jitter_fwhm_ns, dead_time_ns: 0.0, dark_rate_per_ns: 0.0 }
    }

    pub fn jitter_sigma_ns(&self) -> f64 {
        self.jitter_fwhm_ns / FWHM_PER_SIGMA
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Detector {
    One = 1,
    Two = 2,
}

/// One detector click.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ClickRecord {
    pub detector: Detector,
    pub time_ns: f64,
}

/// Click times of both detectors, each strictly increasing.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Clicks {
    pub det1: Vec<f64>,
    pub det2: Vec<f64>,
}

impl Clicks {
    /// All clicks merged in time order.
    pub fn records(&self) -> Vec<ClickRecord> {
        let mut out: Vec<ClickRecord> = self
            .det1
            .iter()
            .map(|&t| ClickRecord { detector: Detector::One, time_ns: t })
            .chain(self.det2.iter().map(|&t| ClickRecord { detector: Detector::Two, time_ns: t }))
            .collect();
        out.sort_by(|a, b| a.time_ns.total_cmp(&b.time_ns));
        out
    }
}

/// Routes, detects and jitters photons. Output is unsorted and has no dead
/// time applied; see [`finish_clicks`].
pub fn route_photons<R: Rng>(
    events: &[EmissionEvent],
    det1: &DetectorModel,
    det2: &DetectorModel,
    rng: &mut R,
    out: &mut Clicks,
) {
    let (s1, s2) = (det1.jitter_sigma_ns(), det2.jitter_sigma_ns());
    for ev in events {
        for &t in &ev.times {
            let to_first = rng.random::<f64>() < 0.5;
            let detected: f64 = rng.random();
            let jitter: f64 = StandardNormal.sample(rng);
            let (det, sigma, list) = if to_first { (det1, s1, &mut out.det1) } else { (det2, s2, &mut out.det2) };
            if detected < det.efficiency {
                list.push(t + sigma * jitter);
            }
        }
    }
}

/// Adds dark counts on `[0, duration]`, sorts, and applies dead time.
pub fn finish_clicks<R: Rng>(mut raw: Vec<f64>, det: &DetectorModel, duration_ns: f64, dark_rng: &mut R) -> Vec<f64> {
    if det.dark_rate_per_ns > 0.0 {
        let mut t = 0.0;
        loop {
            let u: f64 = dark_rng.random();
            t += -(1.0 - u).ln() / det.dark_rate_per_ns;
            if t >= duration_ns {
                break;
            }
            raw.push(t);
        }
    }
    raw.sort_by(f64::total_cmp);
    apply_dead_time(&raw, det.dead_time_ns)
}

/// Keeps a click only if it comes at least `dead_time` after the previously
/// kept click (and strictly after it).
pub fn apply_dead_time(sorted: &[f64], dead_time_ns: f64) -> Vec<f64> {
    let mut out: Vec<f64> = Vec::with_capacity(sorted.len());
    for &t in sorted {
        match out.last() {
            Some(&last) if t - last < dead_time_ns || t <= last => {}
            _ => out.push(t),
        }
    }
    out
}

/// Beamsplitter plus two detectors applied to an arbitrary event stream.
pub fn beamsplit_and_detect<R: Rng>(
    events: &[EmissionEvent],
    det1: &DetectorModel,
    det2: &DetectorModel,
    duration_ns: f64,
    rng: &mut R,
) -> Clicks {
    let mut raw = Clicks::default();
    route_photons(events, det1, det2, rng, &mut raw);
    Clicks {
        det1: finish_clicks(raw.det1, det1, duration_ns, rng),
        det2: finish_clicks(raw.det2, det2, duration_ns, rng),
    }
}

/// Source plus detectors, evaluated in counter-addressed blocks.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ChainConfig {
    pub source: SourceConfig,
    pub det1: DetectorModel,
    pub det2: DetectorModel,
}

/// Raw (unsorted, dead-time-free) clicks of one pulse block.
pub fn detect_block(cfg: &ChainConfig, states: &source::PulseStates, block: u64) -> Clicks {
    let events = source::emit_block(&cfg.source, states, block);
    let mut rng = rng::stream(cfg.source.seed, Domain::Detection, block);
    let mut out = Clicks::default();
    route_photons(&events, &cfg.det1, &cfg.det2, &mut rng, &mut out);
    out
}

/// Merges raw block clicks (in block order) into final click streams.
pub fn merge_blocks(cfg: &ChainConfig, blocks: impl IntoIterator<Item = Clicks>) -> Clicks {
    let mut raw = Clicks::default();
    for b in blocks {
        raw.det1.extend(b.det1);
        raw.det2.extend(b.det2);
    }
    let duration = cfg.source.train.duration_ns();
    let seed = cfg.source.seed;
    Clicks {
        det1: finish_clicks(raw.det1, &cfg.det1, duration, &mut rng::stream(seed, Domain::DarkCounts, 1)),
        det2: finish_clicks(raw.det2, &cfg.det2, duration, &mut rng::stream(seed, Domain::DarkCounts, 2)),
    }
}

/// Sequential reference driver for the whole chain.
pub fn simulate_clicks(cfg: &ChainConfig) -> Clicks {
    let states = source::pulse_states(&cfg.source);
    let blocks = (0..cfg.source.n_blocks()).map(|b| detect_block(cfg, &states, b));
    merge_blocks(cfg, blocks)
}

/// How start–stop pairs are selected.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Correlator {
    /// Time-to-amplitude converter: each start records at most its first
    /// stop inside the histogram range, then re-arms on the next start.
    #[default]
    FirstStop,
    /// Every start–stop pair inside the range.
    AllPairs,
}

/// Binning of the delay histogram.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HistogramSpec {
    pub bin_width_ns: f64,
    /// Half-range; bins cover `[−range, +range)`.
    pub range_ns: f64,
    pub correlator: Correlator,
}

impl Default for HistogramSpec {
    fn default() -> Self {
        Self { bin_width_ns: 0.05, range_ns: 65.0, correlator: Correlator::FirstStop }
    }
}

impl HistogramSpec {
    pub fn n_bins(&self) -> usize {
        (2.0 * self.range_ns / self.bin_width_ns).round() as usize
    }

    fn validate(&self) -> Result<(), HbtError> {
        if !(self.bin_width_ns > 0.0 && self.range_ns > 0.0) || !self.range_ns.is_finite() {
            return Err(HbtError::InvalidHistogram("bin width and range must be positive"));
        }
        if self.n_bins() == 0 || self.n_bins() > 1 << 28 {
            return Err(HbtError::InvalidHistogram("unreasonable number of bins"));
        }
        Ok(())
    }
}

/// Delay histogram with uniform bins starting at `−range`.
#[derive(Debug, Clone, PartialEq)]
pub struct CorrelationHistogram {
    pub bin_width_ns: f64,
    pub range_ns: f64,
    pub counts: Vec<u64>,
}

impl CorrelationHistogram {
    pub fn empty(spec: &HistogramSpec) -> Self {
        Self { bin_width_ns: spec.bin_width_ns, range_ns: spec.range_ns, counts: alloc::vec![0; spec.n_bins()] }
    }

    pub fn bin_start(&self, i: usize) -> f64 {
        -self.range_ns + i as f64 * self.bin_width_ns
    }

    pub fn bin_center(&self, i: usize) -> f64 {
        self.bin_start(i) + 0.5 * self.bin_width_ns
    }

    /// Upper edge of the last bin.
    pub fn upper_edge(&self) -> f64 {
        self.bin_start(self.counts.len())
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().sum()
    }

    fn record(&mut self, tau: f64) {
        let i = ((tau + self.range_ns) / self.bin_width_ns).floor();
        if i >= 0.0 && (i as usize) < self.counts.len() {
            self.counts[i as usize] += 1;
        }
    }

    /// Bin-wise sum; both histograms must share the binning.
    pub fn merge(&mut self, other: &Self) -> Result<(), HbtError> {
        if self.counts.len() != other.counts.len()
            || self.bin_width_ns != other.bin_width_ns
            || self.range_ns != other.range_ns
        {
            return Err(HbtError::InvalidHistogram("binning mismatch"));
        }
        for (a, b) in self.counts.iter_mut().zip(&other.counts) {
            *a += b;
        }
        Ok(())
    }
}

/// Start–stop correlation of two time-ordered click streams.
pub fn correlate(det1: &[f64], det2: &[f64], spec: &HistogramSpec) -> Result<CorrelationHistogram, HbtError> {
    spec.validate()?;
    let mut hist = CorrelationHistogram::empty(spec);
    let range = spec.range_ns;
    let upper = hist.upper_edge();
    let mut first = 0usize;
    for &t1 in det1 {
        while first < det2.len() && det2[first] < t1 - range {
            first += 1;
        }
        match spec.correlator {
            Correlator::FirstStop => {
                if let Some(&t2) = det2.get(first) {
                    if t2 - t1 < upper {
                        hist.record(t2 - t1);
                    }
                }
            }
            Correlator::AllPairs => {
                for &t2 in &det2[first..] {
                    if t2 - t1 >= upper {
                        break;
                    }
                    hist.record(t2 - t1);
                }
            }
        }
    }
    Ok(hist)
}

/// Emission decay histogram folded onto one excitation period.
#[derive(Debug, Clone, PartialEq)]
pub struct StreakHistogram {
    /// Actual bin width: the period divided into a whole number of bins.
    pub bin_width_ns: f64,
    pub period_ns: f64,
    pub irf_fwhm_ns: f64,
    pub counts: Vec<f64>,
}

impl StreakHistogram {
    pub fn empty(period_ns: f64, bin_width_ns: f64, irf_fwhm_ns: f64) -> Result<Self, HbtError> {
        if !(period_ns > 0.0 && bin_width_ns > 0.0 && bin_width_ns <= period_ns) || !(irf_fwhm_ns >= 0.0) {
            return Err(HbtError::InvalidHistogram("need 0 < bin width <= period and IRF >= 0"));
        }
        let n = (period_ns / bin_width_ns).round().max(1.0) as usize;
        Ok(Self { bin_width_ns: period_ns / n as f64, period_ns, irf_fwhm_ns, counts: alloc::vec![0.0; n] })
    }

    pub fn bin_center(&self, i: usize) -> f64 {
        (i as f64 + 0.5) * self.bin_width_ns
    }

    pub fn total(&self) -> f64 {
        self.counts.iter().sum()
    }

    /// Deposits one photon at folded time `t`, spread over the bins by the
    /// Gaussian instrument response (wrapping around the period).
    pub fn deposit(&mut self, t: f64) {
        let n = self.counts.len();
        let mut folded = t - self.period_ns * (t / self.period_ns).floor();
        if folded >= self.period_ns {
            folded = 0.0;
        }
        let sigma = self.irf_fwhm_ns / FWHM_PER_SIGMA;
        if sigma == 0.0 {
            let i = ((folded / self.bin_width_ns) as usize).min(n - 1);
            self.counts[i] += 1.0;
            return;
        }
        let reach = (8.0 * sigma / self.bin_width_ns).ceil() as i64 + 1;
        let centre = (folded / self.bin_width_ns).floor() as i64;
        for k in centre - reach..=centre + reach {
            let a = k as f64 * self.bin_width_ns;
            let w = special::normal_interval(a, a + self.bin_width_ns, folded, sigma);
            self.counts[k.rem_euclid(n as i64) as usize] += w;
        }
    }

    pub fn merge(&mut self, other: &Self) -> Result<(), HbtError> {
        if self.counts.len() != other.counts.len() || self.period_ns != other.period_ns {
            return Err(HbtError::InvalidHistogram("binning mismatch"));
        }
        for (a, b) in self.counts.iter_mut().zip(&other.counts) {
            *a += b;
        }
        Ok(())
    }
}

/// Folds emission times modulo the period, convolved with a Gaussian IRF.
pub fn streak(
    events: &[EmissionEvent],
    period_ns: f64,
    bin_width_ns: f64,
    irf_fwhm_ns: f64,
) -> Result<StreakHistogram, HbtError> {
    let mut hist = StreakHistogram::empty(period_ns, bin_width_ns, irf_fwhm_ns)?;
    for ev in events {
        for &t in &ev.times {
            hist.deposit(t);
        }
    }
    Ok(hist)
}
