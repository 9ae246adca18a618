//! Pulse-by-pulse Monte Carlo of a blinking quantum-dot emitter.
//!
//! The on/off state follows a continuous-time two-state Markov process drawn
//! from its own random stream. Pulses are processed in fixed-size blocks, each
//! with a counter-addressed stream, so any subset of blocks can be generated
//! independently and concatenated into the same event stream.

use alloc::vec::Vec;

use rand::Rng;
use rand_distr::{Distribution, Poisson};
use smallvec::SmallVec;
use thiserror::Error;

use crate::rng::{self, Domain};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SourceError {
    #[error("pulse period must be positive, got {0} ns")]
    InvalidPeriod(f64),
    #[error("need at least one pulse")]
    NoPulses,
    #[error("invalid blinking rates k_on = {k_on}, k_off = {k_off}: {reason}")]
    InvalidBlinking { k_on: f64, k_off: f64, reason: &'static str },
    #[error("invalid emission model: {0}")]
    InvalidEmission(&'static str),
}

/// Excitation pulse train.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PulseTrain {
    pub period_ns: f64,
    pub n_pulses: u64,
}

/// Repetition period of a 76 MHz laser, in ns.
pub const PERIOD_76MHZ_NS: f64 = 1000.0 / 76.0;

impl PulseTrain {
    pub fn new(period_ns: f64, n_pulses: u64) -> Result<Self, SourceError> {
        if !(period_ns > 0.0) || !period_ns.is_finite() {
            return Err(SourceError::InvalidPeriod(period_ns));
        }
        if n_pulses == 0 {
            return Err(SourceError::NoPulses);
        }
        Ok(Self { period_ns, n_pulses })
    }

    pub fn epoch(&self, pulse: u64) -> f64 {
        pulse as f64 * self.period_ns
    }

    pub fn duration_ns(&self) -> f64 {
        self.n_pulses as f64 * self.period_ns
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum InitialState {
    On,
    Off,
    /// Drawn from the stationary distribution.
    Stationary,
}

/// Two-state blinking with switching rates in ns⁻¹.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BlinkingModel {
    /// off → on rate.
    pub k_on: f64,
    /// on → off rate.
    pub k_off: f64,
    pub initial: InitialState,
}

impl BlinkingModel {
    pub fn new(k_on: f64, k_off: f64, initial: InitialState) -> Result<Self, SourceError> {
        let bad = |reason| SourceError::InvalidBlinking { k_on, k_off, reason };
        if !(k_on >= 0.0 && k_off >= 0.0) || !k_on.is_finite() || !k_off.is_finite() {
            return Err(bad("rates must be finite and non-negative"));
        }
        if k_on == 0.0 && k_off == 0.0 && initial == InitialState::Stationary {
            return Err(bad("stationary state undefined when both rates are zero"));
        }
        Ok(Self { k_on, k_off, initial })
    }

    /// An emitter that never blinks.
    pub fn always_on() -> Self {
        Self { k_on: 0.0, k_off: 0.0, initial: InitialState::On }
    }

    /// Stationary probability of being on, `k_on / (k_on + k_off)`.
    pub fn on_fraction(&self) -> f64 {
        let total = self.k_on + self.k_off;
        if total == 0.0 {
            return if self.initial == InitialState::Off { 0.0 } else { 1.0 };
        }
        self.k_on / total
    }

    /// Correlation time `1 / (k_on + k_off)` in ns.
    pub fn correlation_time_ns(&self) -> f64 {
        1.0 / (self.k_on + self.k_off)
    }

    /// Side-peak bunching amplitude `k_off / k_on`.
    pub fn bunching_amplitude(&self) -> f64 {
        if self.k_off == 0.0 {
            0.0
        } else {
            self.k_off / self.k_on
        }
    }
}

/// A maximal time interval with constant blinking state.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BlinkInterval {
    pub start_ns: f64,
    pub end_ns: f64,
    pub on: bool,
}

/// Exact sampler of a blinking trajectory, advanced monotonically in time.
#[derive(Debug, Clone)]
pub struct BlinkingWalker<R> {
    model: BlinkingModel,
    rng: R,
    on: bool,
    start: f64,
    end: f64,
}

impl<R: Rng> BlinkingWalker<R> {
    pub fn new(model: BlinkingModel, mut rng: R) -> Self {
        let on = match model.initial {
            InitialState::On => true,
            InitialState::Off => false,
            InitialState::Stationary => rng.random::<f64>() < model.on_fraction(),
        };
        let end = holding_time(&model, on, &mut rng);
        Self { model, rng, on, start: 0.0, end }
    }

    /// The state at time `t`. Calls must use non-decreasing `t`.
    pub fn state_at(&mut self, t: f64) -> bool {
        while t >= self.end {
            self.advance();
        }
        self.on
    }

    fn advance(&mut self) {
        self.on = !self.on;
        self.start = self.end;
        self.end = self.start + holding_time(&self.model, self.on, &mut self.rng);
    }

    fn current(&self) -> BlinkInterval {
        BlinkInterval { start_ns: self.start, end_ns: self.end, on: self.on }
    }
}

fn holding_time<R: Rng>(model: &BlinkingModel, on: bool, rng: &mut R) -> f64 {
    let rate = if on { model.k_off } else { model.k_on };
    if rate == 0.0 {
        return f64::INFINITY;
    }
    exponential(rng, rate)
}

/// Inverse-transform exponential draw; consumes exactly one uniform.
fn exponential<R: Rng>(rng: &mut R, rate: f64) -> f64 {
    let u: f64 = rng.random();
    -(1.0 - u).ln() / rate
}

/// Exact on/off trajectory tiling `[0, duration]`.
pub fn simulate_blinking<R: Rng>(model: &BlinkingModel, duration_ns: f64, rng: R) -> Vec<BlinkInterval> {
    let mut walker = BlinkingWalker::new(*model, rng);
    let mut out = Vec::new();
    loop {
        let mut iv = walker.current();
        if iv.end_ns >= duration_ns {
            iv.end_ns = duration_ns;
            out.push(iv);
            return out;
        }
        out.push(iv);
        walker.advance();
    }
}

/// Photon-number statistics of an on-state pulse.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum PhotonStatistics {
    /// At most two photons: `P(1) = p1`, `P(2) = p2`.
    Truncated { p1: f64, p2: f64 },
    /// Poisson-distributed photon number (coherent-light benchmark).
    Poisson { mean: f64 },
}

/// Per-pulse emission model.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EmissionModel {
    /// Radiative decay rate in ns⁻¹.
    pub gamma: f64,
    pub statistics: PhotonStatistics,
}

impl EmissionModel {
    pub fn new(gamma: f64, statistics: PhotonStatistics) -> Result<Self, SourceError> {
        if !(gamma > 0.0) || !gamma.is_finite() {
            return Err(SourceError::InvalidEmission("gamma must be positive"));
        }
        match statistics {
            PhotonStatistics::Truncated { p1, p2 } => {
                if !(p1 >= 0.0 && p2 >= 0.0 && p1 + p2 <= 1.0) {
                    return Err(SourceError::InvalidEmission("need p1, p2 >= 0 and p1 + p2 <= 1"));
                }
            }
            PhotonStatistics::Poisson { mean } => {
                if !(mean >= 0.0) || !mean.is_finite() {
                    return Err(SourceError::InvalidEmission("Poisson mean must be non-negative"));
                }
            }
        }
        Ok(Self { gamma, statistics })
    }

    /// Mean photon number of an on-state pulse.
    pub fn mean_photons(&self) -> f64 {
        match self.statistics {
            PhotonStatistics::Truncated { p1, p2 } => p1 + 2.0 * p2,
            PhotonStatistics::Poisson { mean } => mean,
        }
    }

    /// g²(0) of the photon-number distribution alone, `E[n(n−1)] / E[n]²`.
    pub fn intrinsic_g2(&self) -> f64 {
        match self.statistics {
            PhotonStatistics::Truncated { p1, p2 } => 2.0 * p2 / ((p1 + 2.0 * p2) * (p1 + 2.0 * p2)),
            PhotonStatistics::Poisson { .. } => 1.0,
        }
    }
}

/// Photons emitted after one excitation pulse, times in ns, sorted.
#[derive(Debug, Clone, PartialEq)]
pub struct EmissionEvent {
    pub pulse_index: u64,
    pub times: SmallVec<[f64; 2]>,
}

/// Samples the photons of one pulse.
///
/// The truncated model always consumes three uniforms for an on-pulse (photon
/// number plus two delays), so streams stay aligned when `p1`/`p2` change.
pub fn sample_pulse_emission<R: Rng>(
    is_on: bool,
    em: &EmissionModel,
    pulse_index: u64,
    epoch_ns: f64,
    rng: &mut R,
) -> EmissionEvent {
    let mut times = SmallVec::new();
    if is_on {
        match em.statistics {
            PhotonStatistics::Truncated { p1, p2 } => {
                let u: f64 = rng.random();
                let d1 = exponential(rng, em.gamma);
                let d2 = exponential(rng, em.gamma);
                let n = if u < p2 {
                    2
                } else if u < p2 + p1 {
                    1
                } else {
                    0
                };
                if n >= 1 {
                    times.push(epoch_ns + d1);
                }
                if n == 2 {
                    times.push(epoch_ns + d2);
                }
            }
            PhotonStatistics::Poisson { mean } => {
                let n = if mean > 0.0 { Poisson::new(mean).map(|p| p.sample(rng) as usize).unwrap_or(0) } else { 0 };
                for _ in 0..n {
                    times.push(epoch_ns + exponential(rng, em.gamma));
                }
            }
        }
        times.sort_by(f64::total_cmp);
    }
    EmissionEvent { pulse_index, times }
}

/// Pulses per counter-addressed block.
pub const BLOCK_PULSES: u64 = 1 << 14;

/// Everything needed to reproduce an emission run.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SourceConfig {
    pub train: PulseTrain,
    pub blinking: BlinkingModel,
    pub emission: EmissionModel,
    pub seed: u64,
}

impl SourceConfig {
    pub fn n_blocks(&self) -> u64 {
        self.train.n_pulses.div_ceil(BLOCK_PULSES)
    }

    pub fn block_range(&self, block: u64) -> core::ops::Range<u64> {
        let start = block * BLOCK_PULSES;
        start..(start + BLOCK_PULSES).min(self.train.n_pulses)
    }
}

/// On/off state at every pulse epoch, one bit per pulse.
#[derive(Debug, Clone, PartialEq)]
pub struct PulseStates {
    words: Vec<u64>,
    len: u64,
}

impl PulseStates {
    pub fn get(&self, pulse: u64) -> bool {
        (self.words[(pulse / 64) as usize] >> (pulse % 64)) & 1 == 1
    }

    pub fn len(&self) -> u64 {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn count_on(&self) -> u64 {
        self.words.iter().map(|w| w.count_ones() as u64).sum()
    }
}

/// Evaluates the blinking trajectory at each pulse epoch.
pub fn pulse_states(cfg: &SourceConfig) -> PulseStates {
    let n = cfg.train.n_pulses;
    let mut words = alloc::vec![0u64; n.div_ceil(64) as usize];
    let mut walker = BlinkingWalker::new(cfg.blinking, rng::stream(cfg.seed, Domain::Blinking, 0));
    for pulse in 0..n {
        if walker.state_at(cfg.train.epoch(pulse)) {
            words[(pulse / 64) as usize] |= 1 << (pulse % 64);
        }
    }
    PulseStates { words, len: n }
}

/// Emission events (pulses with at least one photon) of one block.
pub fn emit_block(cfg: &SourceConfig, states: &PulseStates, block: u64) -> Vec<EmissionEvent> {
    let mut rng = rng::stream(cfg.seed, Domain::Emission, block);
    cfg.block_range(block)
        .filter_map(|pulse| {
            let ev = sample_pulse_emission(states.get(pulse), &cfg.emission, pulse, cfg.train.epoch(pulse), &mut rng);
            (!ev.times.is_empty()).then_some(ev)
        })
        .collect()
}

/// Full event stream, generated block after block.
pub fn run_source(cfg: &SourceConfig) -> Vec<EmissionEvent> {
    let states = pulse_states(cfg);
    (0..cfg.n_blocks()).flat_map(|b| emit_block(cfg, &states, b)).collect()
}
