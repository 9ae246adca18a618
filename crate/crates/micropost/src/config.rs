//! Experiment configuration: a TOML file of named presets.
//!
//! Every preset lives under `[presets.NAME]` and may name a parent with
//! `extends = "other"`. A preset is resolved by deep-merging its tables over
//! its parent's, then filling every key that is still missing from the
//! built-in defaults. See `presets/default.toml` for the shipped presets and
//! the README for the full schema.

use std::collections::BTreeMap;
use std::fmt;
use std::path::Path;

use micropost_core::analysis::{AInfSource, G2Options, Nearest, DEFAULT_FIT_START_OFFSET_NS, MIN_SIDE_PEAKS};
use micropost_core::cavity::{build_micropost_stack, CavityError, Layer, LayerStack, MicropostDesign};
use micropost_core::hbt::{Correlator, DetectorModel, HistogramSpec};
use micropost_core::purcell::{decay_rate, CavityMode, DecayModel, TuningMap};
use micropost_core::source::{
    BlinkingModel, EmissionModel, InitialState, PhotonStatistics, PulseTrain, PERIOD_76MHZ_NS,
};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use toml::Table;

/// The preset file shipped with the crate.
pub const BUILTIN_PRESETS: &str = include_str!("../presets/default.toml");

/// Largest seed a config can hold (TOML integers are signed).
pub const MAX_SEED: u64 = i64::MAX as u64;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub extends: Option<String>,
    /// Required by every Monte Carlo command unless given on the command line.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    pub output_dir: String,
    pub stack: StackSection,
    pub spectrum: SpectrumSection,
    pub fdtd: FdtdSection,
    pub decay: DecaySection,
    pub blinking: BlinkingSection,
    pub emission: EmissionSection,
    pub train: TrainSection,
    pub detector: DetectorSection,
    /// Second counter; a copy of `detector` when absent.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub detector2: Option<DetectorSection>,
    pub histogram: HistogramSection,
    pub streak: StreakSection,
    pub analysis: AnalysisSection,
    pub sweep: SweepSection,
    pub calibration: CalibrationSection,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub tuning: Option<TuningSection>,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            extends: None,
            seed: None,
            output_dir: "out".into(),
            stack: StackSection::default(),
            spectrum: SpectrumSection::default(),
            fdtd: FdtdSection::default(),
            decay: DecaySection::default(),
            blinking: BlinkingSection::default(),
            emission: EmissionSection::default(),
            train: TrainSection::default(),
            detector: DetectorSection::default(),
            detector2: None,
            histogram: HistogramSection::default(),
            streak: StreakSection::default(),
            analysis: AnalysisSection::default(),
            sweep: SweepSection::default(),
            calibration: CalibrationSection::default(),
            tuning: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct StackSection {
    pub top_pairs: usize,
    pub bottom_pairs: usize,
    pub spacer_nm: f64,
    pub gaas_nm: f64,
    pub alas_nm: f64,
    pub n_gaas: f64,
    pub n_alas: f64,
    pub ambient_index: f64,
    pub substrate_index: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub cap: Option<LayerSpec>,
    /// Explicit layer list, top first. Replaces the DBR design when present.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub layers: Option<Vec<LayerSpec>>,
}

impl Default for StackSection {
    fn default() -> Self {
        let d = MicropostDesign::default();
        Self {
            top_pairs: d.top_pairs,
            bottom_pairs: d.bottom_pairs,
            spacer_nm: d.spacer_nm,
            gaas_nm: d.gaas_nm,
            alas_nm: d.alas_nm,
            n_gaas: d.n_gaas,
            n_alas: d.n_alas,
            ambient_index: d.ambient_index,
            substrate_index: d.substrate_index,
            cap: None,
            layers: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LayerSpec {
    pub thickness_nm: f64,
    pub index: f64,
    #[serde(default = "default_layer_label")]
    pub label: String,
}

fn default_layer_label() -> String {
    "layer".into()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SpectrumSection {
    pub min_nm: f64,
    pub max_nm: f64,
    pub samples: usize,
    pub stopband_threshold: f64,
}

impl Default for SpectrumSection {
    fn default() -> Self {
        Self { min_nm: 850.0, max_nm: 1050.0, samples: 20_001, stopband_threshold: 0.95 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FdtdSection {
    pub dx_nm: f64,
    /// Pulse centre for the reflectance run; the stopband centre when absent.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub center_nm: Option<f64>,
    /// Half-width of the reflectance band.
    pub bandwidth_nm: f64,
    pub samples: usize,
    pub tolerance: f64,
    pub ringdown_bandwidth_nm: f64,
    pub settle_steps: u64,
    pub record_steps: u64,
    /// Every n-th ringdown sample is written to CSV.
    pub ringdown_decimation: usize,
}

impl Default for FdtdSection {
    fn default() -> Self {
        Self {
            dx_nm: 2.0,
            center_nm: None,
            bandwidth_nm: 100.0,
            samples: 401,
            tolerance: 1e-4,
            ringdown_bandwidth_nm: 10.0,
            settle_steps: 20_000,
            record_steps: 900_000,
            ringdown_decimation: 16,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DecaySection {
    pub lambda_c_nm: f64,
    pub q_factor: f64,
    pub gamma_max: f64,
    pub gamma_min: f64,
}

impl Default for DecaySection {
    fn default() -> Self {
        let m = DecayModel::nominal();
        Self {
            lambda_c_nm: m.mode.lambda_c_nm,
            q_factor: m.mode.q_factor,
            gamma_max: m.gamma_max,
            gamma_min: m.gamma_min,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InitialKind {
    Stationary,
    On,
    Off,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BlinkingSection {
    pub enabled: bool,
    pub k_on: f64,
    pub k_off: f64,
    pub initial: InitialKind,
}

impl Default for BlinkingSection {
    fn default() -> Self {
        Self { enabled: true, k_on: 0.0288, k_off: 0.0096, initial: InitialKind::Stationary }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StatisticsKind {
    Truncated,
    Poisson,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EmissionSection {
    pub statistics: StatisticsKind,
    pub p1: f64,
    pub p2: f64,
    /// Poisson mean; `p1 + 2 p2` when absent.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub poisson_mean: Option<f64>,
    /// Emitter detuning from the cavity; sets the decay rate of HBT runs.
    pub detuning_nm: f64,
}

impl Default for EmissionSection {
    fn default() -> Self {
        Self { statistics: StatisticsKind::Truncated, p1: 0.8, p2: 0.0, poisson_mean: None, detuning_nm: 0.0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainSection {
    pub period_ns: f64,
    pub n_pulses: u64,
}

impl Default for TrainSection {
    fn default() -> Self {
        Self { period_ns: PERIOD_76MHZ_NS, n_pulses: 1_000_000 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DetectorSection {
    pub efficiency: f64,
    pub jitter_fwhm_ns: f64,
    pub dead_time_ns: f64,
    pub dark_rate_per_ns: f64,
}

impl Default for DetectorSection {
    fn default() -> Self {
        let d = DetectorModel::default();
        Self {
            efficiency: d.efficiency,
            jitter_fwhm_ns: d.jitter_fwhm_ns,
            dead_time_ns: d.dead_time_ns,
            dark_rate_per_ns: d.dark_rate_per_ns,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum CorrelatorKind {
    /// First stop only, as a time-to-amplitude converter.
    Tac,
    /// Every start–stop pair.
    #[value(name = "all_pairs")]
    AllPairs,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct HistogramSection {
    pub bin_width_ns: f64,
    pub range_ns: f64,
    pub correlator: CorrelatorKind,
}

impl Default for HistogramSection {
    fn default() -> Self {
        Self { bin_width_ns: 0.05, range_ns: 65.0, correlator: CorrelatorKind::Tac }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct StreakSection {
    pub bin_width_ns: f64,
    pub irf_fwhm_ns: f64,
}

impl Default for StreakSection {
    fn default() -> Self {
        Self { bin_width_ns: 0.025, irf_fwhm_ns: 0.025 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AInfKind {
    Fit,
    Farthest,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NearestKind {
    Symmetric,
    Positive,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AnalysisSection {
    /// Integration windows; the first one is the headline window.
    pub windows_ns: Vec<f64>,
    pub k_max: usize,
    pub a_inf: AInfKind,
    /// Peaks per side averaged when `a_inf = "farthest"`.
    pub farthest_peaks: usize,
    pub nearest: NearestKind,
    pub fit_start_offset_ns: f64,
}

impl Default for AnalysisSection {
    fn default() -> Self {
        Self {
            windows_ns: vec![4.0, 1.0],
            k_max: 4,
            a_inf: AInfKind::Fit,
            farthest_peaks: 2,
            nearest: NearestKind::Symmetric,
            fit_start_offset_ns: DEFAULT_FIT_START_OFFSET_NS,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SweepSection {
    pub detunings_nm: Vec<f64>,
    /// Used instead of `detunings_nm` when set; needs a `[tuning]` table.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub temperatures_k: Option<Vec<f64>>,
    pub pulses_per_point: u64,
}

impl Default for SweepSection {
    fn default() -> Self {
        Self {
            detunings_nm: vec![-2.8, -1.4, -0.7, -0.35, 0.0, 0.35, 0.7, 2.1],
            temperatures_k: None,
            pulses_per_point: 1_000_000,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CalibrationSection {
    pub target_g2: f64,
    /// Absolute tolerance on the simulated g²(0).
    pub tolerance: f64,
    pub pulses: u64,
    pub max_iterations: usize,
}

impl Default for CalibrationSection {
    fn default() -> Self {
        Self { target_g2: 0.02, tolerance: 0.001, pulses: 10_000_000, max_iterations: 30 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TuningSection {
    /// `[temperature K, emitter wavelength nm]` rows.
    pub table: Vec<[f64; 2]>,
    pub lambda_c_at_min_nm: f64,
    pub cavity_shift_nm: f64,
    pub cavity_shift_enabled: bool,
}

impl Default for TuningSection {
    fn default() -> Self {
        Self { table: Vec::new(), lambda_c_at_min_nm: 880.0, cavity_shift_nm: 0.0, cavity_shift_enabled: true }
    }
}

/// Where in a config file a problem was found.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Location {
    pub origin: String,
    pub line: Option<usize>,
}

impl fmt::Display for Location {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.line {
            Some(l) => write!(f, "{}:{}", self.origin, l),
            None => f.write_str(&self.origin),
        }
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
#[error("{location}: {message}")]
pub struct ConfigError {
    pub location: Location,
    pub message: String,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct TypedFile {
    #[serde(default)]
    #[allow(dead_code)]
    presets: BTreeMap<String, ExperimentConfig>,
}

#[derive(Deserialize)]
struct RawFile {
    #[serde(default)]
    presets: BTreeMap<String, Table>,
}

/// A parsed preset file.
#[derive(Debug, Clone)]
pub struct PresetFile {
    origin: String,
    text: String,
    presets: BTreeMap<String, Table>,
}

fn line_of(text: &str, offset: usize) -> usize {
    text[..offset.min(text.len())].bytes().filter(|&b| b == b'\n').count() + 1
}

impl PresetFile {
    pub fn builtin() -> Self {
        Self::parse(BUILTIN_PRESETS, "<built-in presets>").expect("built-in presets are valid")
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|e| ConfigError {
            location: Location { origin: path.display().to_string(), line: None },
            message: e.to_string(),
        })?;
        Self::parse(&text, &path.display().to_string())
    }

    /// Parses and checks syntax, key names, value types and `extends`
    /// references. Semantic checks run per preset in [`PresetFile::resolve`].
    pub fn parse(text: &str, origin: &str) -> Result<Self, ConfigError> {
        let at = |line: Option<usize>, message: String| ConfigError {
            location: Location { origin: origin.to_string(), line },
            message,
        };
        if let Err(e) = toml::from_str::<TypedFile>(text) {
            let line = e.span().map(|s| line_of(text, s.start));
            return Err(at(line, e.message().trim().to_string()));
        }
        let raw: RawFile = toml::from_str(text).map_err(|e| at(None, e.message().to_string()))?;
        let file = Self { origin: origin.to_string(), text: text.to_string(), presets: raw.presets };
        for (name, table) in &file.presets {
            if let Some(parent) = table.get("extends").and_then(|v| v.as_str()) {
                if !file.presets.contains_key(parent) {
                    return Err(at(
                        file.find_line(&[name.as_str()], "", "extends"),
                        format!("preset `{name}` extends unknown preset `{parent}`"),
                    ));
                }
            }
        }
        Ok(file)
    }

    pub fn origin(&self) -> &str {
        &self.origin
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.presets.keys().map(String::as_str)
    }

    /// Preset names from `name` up through its ancestors.
    fn chain<'a>(&'a self, name: &'a str) -> Result<Vec<&'a str>, ConfigError> {
        let mut chain = vec![];
        let mut current = name;
        loop {
            if chain.contains(&current) {
                chain.push(current);
                return Err(self.error(
                    self.find_line(&[name], "", "extends"),
                    format!("preset inheritance cycle: {}", chain.join(" -> ")),
                ));
            }
            let Some(table) = self.presets.get(current) else {
                let known: Vec<&str> = self.names().collect();
                return Err(self.error(None, format!("unknown preset `{current}` (known: {})", known.join(", "))));
            };
            chain.push(current);
            match table.get("extends").and_then(|v| v.as_str()) {
                Some(parent) => current = parent,
                None => return Ok(chain),
            }
        }
    }

    fn error(&self, line: Option<usize>, message: String) -> ConfigError {
        ConfigError { location: Location { origin: self.origin.clone(), line }, message }
    }

    /// Merges the inheritance chain of `name`, fills defaults and validates.
    pub fn resolve(&self, name: &str) -> Result<ExperimentConfig, ConfigError> {
        let chain = self.chain(name)?;
        let mut merged = Table::new();
        for preset in chain.iter().rev() {
            deep_merge(&mut merged, &self.presets[*preset]);
        }
        merged.remove("extends");
        let config: ExperimentConfig =
            toml::Value::Table(merged).try_into().map_err(|e: toml::de::Error| self.error(None, e.to_string()))?;
        if let Some(issue) = validate(&config).into_iter().next() {
            let line = self.find_line(&chain, issue.section, issue.key);
            return Err(
                self.error(line, format!("preset `{name}`: {}.{}: {}", issue.section, issue.key, issue.message))
            );
        }
        Ok(config)
    }

    /// Line of `key` inside `[presets.P.section]` for the first preset `P` of
    /// the chain that sets it, falling back to the section header.
    fn find_line(&self, chain: &[&str], section: &str, key: &str) -> Option<usize> {
        let mut header_hit = None;
        for preset in chain {
            let header = if section.is_empty() {
                format!("[presets.{preset}]")
            } else {
                format!("[presets.{preset}.{section}]")
            };
            let mut inside = false;
            for (i, line) in self.text.lines().enumerate() {
                let t = line.trim();
                if t.starts_with('[') {
                    inside = t == header;
                    if inside && header_hit.is_none() {
                        header_hit = Some(i + 1);
                    }
                    continue;
                }
                if inside {
                    if let Some(rest) = t.strip_prefix(key) {
                        if rest.trim_start().starts_with('=') {
                            return Some(i + 1);
                        }
                    }
                }
            }
        }
        header_hit
    }
}

fn deep_merge(base: &mut Table, over: &Table) {
    for (k, v) in over {
        match (base.get_mut(k), v) {
            (Some(toml::Value::Table(b)), toml::Value::Table(o)) => deep_merge(b, o),
            _ => {
                base.insert(k.clone(), v.clone());
            }
        }
    }
}

struct Issue {
    section: &'static str,
    key: &'static str,
    message: String,
}

fn validate(c: &ExperimentConfig) -> Vec<Issue> {
    let mut out = Vec::new();
    let mut check = |ok: bool, section: &'static str, key: &'static str, message: &str| {
        if !ok {
            out.push(Issue { section, key, message: message.to_string() });
        }
    };
    let pos = |x: f64| x > 0.0 && x.is_finite();
    let nonneg = |x: f64| x >= 0.0 && x.is_finite();

    if let Some(seed) = c.seed {
        check(seed <= MAX_SEED, "", "seed", "must fit in 63 bits");
    }
    let s = &c.stack;
    check(pos(s.spacer_nm), "stack", "spacer_nm", "must be positive");
    check(pos(s.gaas_nm), "stack", "gaas_nm", "must be positive");
    check(pos(s.alas_nm), "stack", "alas_nm", "must be positive");
    check(s.n_gaas >= 1.0 && s.n_gaas.is_finite(), "stack", "n_gaas", "must be at least 1");
    check(s.n_alas >= 1.0 && s.n_alas.is_finite(), "stack", "n_alas", "must be at least 1");
    check(s.ambient_index >= 1.0 && s.ambient_index.is_finite(), "stack", "ambient_index", "must be at least 1");
    check(s.substrate_index >= 1.0 && s.substrate_index.is_finite(), "stack", "substrate_index", "must be at least 1");
    for l in s.cap.iter().chain(s.layers.iter().flatten()) {
        check(pos(l.thickness_nm), "stack", "thickness_nm", "layer thickness must be positive");
        check(l.index >= 1.0 && l.index.is_finite(), "stack", "index", "layer index must be at least 1");
    }

    let sp = &c.spectrum;
    check(pos(sp.min_nm), "spectrum", "min_nm", "must be positive");
    check(sp.max_nm > sp.min_nm && sp.max_nm.is_finite(), "spectrum", "max_nm", "must exceed min_nm");
    check(sp.samples >= 3, "spectrum", "samples", "need at least 3 samples");
    check(
        sp.stopband_threshold > 0.0 && sp.stopband_threshold < 1.0,
        "spectrum",
        "stopband_threshold",
        "must lie in (0, 1)",
    );

    let f = &c.fdtd;
    check(pos(f.dx_nm), "fdtd", "dx_nm", "must be positive");
    check(f.center_nm.is_none_or(pos), "fdtd", "center_nm", "must be positive");
    check(pos(f.bandwidth_nm), "fdtd", "bandwidth_nm", "must be positive");
    check(f.samples >= 2, "fdtd", "samples", "need at least 2 samples");
    check(pos(f.tolerance), "fdtd", "tolerance", "must be positive");
    check(pos(f.ringdown_bandwidth_nm), "fdtd", "ringdown_bandwidth_nm", "must be positive");
    check(f.record_steps > 0, "fdtd", "record_steps", "must be positive");
    check(f.ringdown_decimation > 0, "fdtd", "ringdown_decimation", "must be positive");

    let d = &c.decay;
    check(pos(d.lambda_c_nm), "decay", "lambda_c_nm", "must be positive");
    check(pos(d.q_factor), "decay", "q_factor", "must be positive");
    check(pos(d.gamma_min), "decay", "gamma_min", "must be positive");
    check(d.gamma_max >= d.gamma_min && d.gamma_max.is_finite(), "decay", "gamma_max", "must be at least gamma_min");

    let b = &c.blinking;
    check(nonneg(b.k_on), "blinking", "k_on", "must be non-negative");
    check(nonneg(b.k_off), "blinking", "k_off", "must be non-negative");
    check(
        !(b.enabled && b.k_on == 0.0 && b.k_off == 0.0 && b.initial == InitialKind::Stationary),
        "blinking",
        "initial",
        "stationary state undefined when both rates are zero",
    );

    let e = &c.emission;
    check(nonneg(e.p1) && e.p1 <= 1.0, "emission", "p1", "must lie in [0, 1]");
    check(nonneg(e.p2) && e.p1 + e.p2 <= 1.0, "emission", "p2", "need p2 >= 0 and p1 + p2 <= 1");
    check(e.poisson_mean.is_none_or(nonneg), "emission", "poisson_mean", "must be non-negative");
    check(e.detuning_nm.is_finite(), "emission", "detuning_nm", "must be finite");

    check(pos(c.train.period_ns), "train", "period_ns", "must be positive");
    check(c.train.n_pulses > 0, "train", "n_pulses", "need at least one pulse");

    for (section, det) in [("detector", Some(&c.detector)), ("detector2", c.detector2.as_ref())] {
        let Some(det) = det else { continue };
        check((0.0..=1.0).contains(&det.efficiency), section, "efficiency", "must lie in [0, 1]");
        check(nonneg(det.jitter_fwhm_ns), section, "jitter_fwhm_ns", "must be non-negative");
        check(nonneg(det.dead_time_ns), section, "dead_time_ns", "must be non-negative");
        check(nonneg(det.dark_rate_per_ns), section, "dark_rate_per_ns", "must be non-negative");
    }

    let h = &c.histogram;
    check(pos(h.bin_width_ns), "histogram", "bin_width_ns", "must be positive");
    check(pos(h.range_ns), "histogram", "range_ns", "must be positive");

    check(pos(c.streak.bin_width_ns), "streak", "bin_width_ns", "must be positive");
    check(nonneg(c.streak.irf_fwhm_ns), "streak", "irf_fwhm_ns", "must be non-negative");

    let a = &c.analysis;
    check(!a.windows_ns.is_empty(), "analysis", "windows_ns", "need at least one window");
    for &w in &a.windows_ns {
        check(pos(w) && w < c.train.period_ns, "analysis", "windows_ns", "windows must lie in (0, period)");
    }
    check(a.k_max >= MIN_SIDE_PEAKS, "analysis", "k_max", &format!("need at least {MIN_SIDE_PEAKS} side peaks"));
    let widest = a.windows_ns.iter().cloned().fold(0.0, f64::max);
    check(
        a.k_max as f64 * c.train.period_ns + widest / 2.0 <= h.range_ns,
        "histogram",
        "range_ns",
        "must cover the outermost peak window, k_max * period + window / 2",
    );
    check(a.farthest_peaks >= 1 && a.farthest_peaks <= a.k_max, "analysis", "farthest_peaks", "must lie in [1, k_max]");
    check(nonneg(a.fit_start_offset_ns), "analysis", "fit_start_offset_ns", "must be non-negative");

    check(c.sweep.pulses_per_point > 0, "sweep", "pulses_per_point", "must be positive");
    for &x in &c.sweep.detunings_nm {
        check(x.is_finite(), "sweep", "detunings_nm", "must be finite");
    }
    check(
        c.sweep.temperatures_k.is_none() || c.tuning.is_some(),
        "sweep",
        "temperatures_k",
        "a temperature sweep needs a [tuning] table",
    );

    let cal = &c.calibration;
    check(nonneg(cal.target_g2), "calibration", "target_g2", "must be non-negative");
    check(pos(cal.tolerance), "calibration", "tolerance", "must be positive");
    check(cal.pulses > 0, "calibration", "pulses", "must be positive");
    check(cal.max_iterations > 0, "calibration", "max_iterations", "must be positive");

    if let Some(t) = &c.tuning {
        check(t.table.len() >= 2, "tuning", "table", "need at least two rows");
        check(t.table.windows(2).all(|w| w[1][0] > w[0][0]), "tuning", "table", "temperatures must increase");
    }
    out
}

fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

impl ExperimentConfig {
    /// The canonical TOML text of this config.
    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    /// SHA-256 of the canonical TOML text, in hex.
    pub fn hash(&self) -> String {
        hex(&Sha256::digest(self.to_toml().as_bytes()))
    }

    /// A preset file holding only this config, under `name`.
    pub fn to_preset_file(&self, name: &str) -> String {
        let mut presets = Table::new();
        presets.insert(name.to_string(), toml::Value::try_from(self).expect("config serializes"));
        let mut root = Table::new();
        root.insert("presets".into(), toml::Value::Table(presets));
        toml::to_string(&root).expect("config serializes")
    }

    pub fn stack(&self) -> Result<LayerStack, CavityError> {
        let s = &self.stack;
        if let Some(layers) = &s.layers {
            let layers =
                layers.iter().map(|l| Layer::new(l.thickness_nm, l.index, &l.label)).collect::<Result<Vec<_>, _>>()?;
            return LayerStack::new(s.ambient_index, layers, s.substrate_index);
        }
        let cap = match &s.cap {
            Some(l) => Some(Layer::new(l.thickness_nm, l.index, &l.label)?),
            None => None,
        };
        build_micropost_stack(&MicropostDesign {
            top_pairs: s.top_pairs,
            bottom_pairs: s.bottom_pairs,
            spacer_nm: s.spacer_nm,
            gaas_nm: s.gaas_nm,
            alas_nm: s.alas_nm,
            n_gaas: s.n_gaas,
            n_alas: s.n_alas,
            cap,
            ambient_index: s.ambient_index,
            substrate_index: s.substrate_index,
        })
    }

    pub fn decay_model(&self) -> DecayModel {
        let d = &self.decay;
        DecayModel {
            gamma_max: d.gamma_max,
            gamma_min: d.gamma_min,
            mode: CavityMode { lambda_c_nm: d.lambda_c_nm, q_factor: d.q_factor },
        }
    }

    pub fn blinking(&self) -> BlinkingModel {
        let b = &self.blinking;
        if !b.enabled {
            return BlinkingModel::always_on();
        }
        let initial = match b.initial {
            InitialKind::Stationary => InitialState::Stationary,
            InitialKind::On => InitialState::On,
            InitialKind::Off => InitialState::Off,
        };
        BlinkingModel { k_on: b.k_on, k_off: b.k_off, initial }
    }

    pub fn statistics(&self) -> PhotonStatistics {
        let e = &self.emission;
        match e.statistics {
            StatisticsKind::Truncated => PhotonStatistics::Truncated { p1: e.p1, p2: e.p2 },
            StatisticsKind::Poisson => PhotonStatistics::Poisson { mean: e.poisson_mean.unwrap_or(e.p1 + 2.0 * e.p2) },
        }
    }

    /// Emission model at the configured detuning.
    pub fn emission(&self) -> EmissionModel {
        let m = self.decay_model();
        let gamma = decay_rate(m.mode.lambda_c_nm + self.emission.detuning_nm, &m);
        self.emission_with_gamma(gamma)
    }

    pub fn emission_with_gamma(&self, gamma: f64) -> EmissionModel {
        EmissionModel { gamma, statistics: self.statistics() }
    }

    pub fn train(&self, n_pulses: u64) -> PulseTrain {
        PulseTrain { period_ns: self.train.period_ns, n_pulses }
    }

    pub fn detectors(&self) -> (DetectorModel, DetectorModel) {
        let model = |d: &DetectorSection| DetectorModel {
            efficiency: d.efficiency,
            jitter_fwhm_ns: d.jitter_fwhm_ns,
            dead_time_ns: d.dead_time_ns,
            dark_rate_per_ns: d.dark_rate_per_ns,
        };
        let d1 = model(&self.detector);
        (d1, self.detector2.as_ref().map(model).unwrap_or(d1))
    }

    pub fn histogram_spec(&self) -> HistogramSpec {
        let h = &self.histogram;
        HistogramSpec {
            bin_width_ns: h.bin_width_ns,
            range_ns: h.range_ns,
            correlator: match h.correlator {
                CorrelatorKind::Tac => Correlator::FirstStop,
                CorrelatorKind::AllPairs => Correlator::AllPairs,
            },
        }
    }

    pub fn g2_options(&self) -> G2Options {
        let a = &self.analysis;
        G2Options {
            a_inf: match a.a_inf {
                AInfKind::Fit => AInfSource::Fit,
                AInfKind::Farthest => AInfSource::FarthestPeaks(a.farthest_peaks),
            },
            nearest: match a.nearest {
                NearestKind::Symmetric => Nearest::Symmetric,
                NearestKind::Positive => Nearest::PositiveOnly,
            },
        }
    }

    pub fn tuning_map(&self) -> Option<Result<TuningMap, micropost_core::purcell::PurcellError>> {
        self.tuning.as_ref().map(|t| {
            let table = t.table.iter().map(|r| (r[0], r[1])).collect();
            TuningMap::new(table, t.lambda_c_at_min_nm, t.cavity_shift_nm).map(|mut m| {
                m.cavity_shift_enabled = t.cavity_shift_enabled;
                m
            })
        })
    }
}
