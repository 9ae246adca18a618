//! One-dimensional Yee-scheme solver over a [`LayerStack`].
//!
//! Units are normalized so that `c = 1` and lengths and times are both in
//! nm; [`RingdownRecord`] converts to ns. `E` lives on integer nodes `i·dx`,
//! `H` on half nodes. Both ends are perfect conductors covered by a graded
//! (cubic) matched-loss absorber.
//!
//! Grid layout, left to right:
//!
//! ```text
//! | absorber | ambient pad | stack layers | substrate pad | absorber |
//! ```

use alloc::string::String;
use alloc::vec::Vec;
use core::f64::consts::PI;
use core::ops::Range;

use num_complex::Complex64;
use thiserror::Error;

use crate::cavity::{linspace, CavityError, Layer, LayerStack, ReflectanceSpectrum};
use crate::fit;
use crate::SPEED_OF_LIGHT_NM_PER_NS;

/// Shortest wavelength the grid must resolve.
pub const DESIGN_WAVELENGTH_NM: f64 = 850.0;
pub const MIN_CELLS_PER_WAVELENGTH: f64 = 20.0;
pub const DEFAULT_DX_NM: f64 = 2.0;
pub const DEFAULT_ABSORBER_CELLS: usize = 64;
pub const DEFAULT_PAD_CELLS: usize = 100;
pub const COURANT: f64 = 0.99;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum FdtdError {
    #[error("dx = {dx_nm} nm gives {cells_per_wavelength:.1} cells per shortest wavelength (need {required})")]
    ResolutionTooCoarse { dx_nm: f64, cells_per_wavelength: f64, required: f64 },
    #[error("invalid grid: {0}")]
    InvalidGrid(&'static str),
    #[error("invalid source: {0}")]
    InvalidSource(&'static str),
    #[error("no decay detected: {0}")]
    NoDecayDetected(NoDecay),
    #[error("ringdown fit diverged: {0}")]
    FitDiverged(&'static str),
    #[error(transparent)]
    Cavity(#[from] CavityError),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum NoDecay {
    /// The record is identically zero.
    NothingStored,
    /// Energy did not fall measurably; Q is beyond what the record resolves.
    Undamped { q_lower_bound: f64 },
}

impl core::fmt::Display for NoDecay {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        match self {
            NoDecay::NothingStored => write!(f, "no field stored after the source turned off"),
            NoDecay::Undamped { q_lower_bound } => write!(f, "Q beyond measurable (> {q_lower_bound:.3e})"),
        }
    }
}

/// Discretized permittivity profile.
#[derive(Debug, Clone, PartialEq)]
pub struct Grid1D {
    dx_nm: f64,
    permittivity: Vec<f64>,
    absorber_cells: usize,
    stack_cells: Range<usize>,
    layer_cells: Vec<Range<usize>>,
    snapped: LayerStack,
}

impl Grid1D {
    pub fn dx_nm(&self) -> f64 {
        self.dx_nm
    }

    /// Relative permittivity of each cell `[i·dx, (i+1)·dx)`.
    pub fn permittivity(&self) -> &[f64] {
        &self.permittivity
    }

    pub fn len(&self) -> usize {
        self.permittivity.len()
    }

    pub fn is_empty(&self) -> bool {
        self.permittivity.is_empty()
    }

    pub fn absorber_cells(&self) -> usize {
        self.absorber_cells
    }

    pub fn stack_cells(&self) -> Range<usize> {
        self.stack_cells.clone()
    }

    /// Cells occupied by each stack layer, in stack order.
    pub fn layer_cells(&self) -> &[Range<usize>] {
        &self.layer_cells
    }

    /// The stack as actually represented on the grid.
    pub fn snapped_stack(&self) -> &LayerStack {
        &self.snapped
    }

    /// Middle cell of the first layer labelled `label`.
    pub fn layer_center_cell(&self, label: &str) -> Option<usize> {
        let r = &self.layer_cells[self.snapped.find_layer(label)?];
        (!r.is_empty()).then(|| (r.start + r.end) / 2)
    }

    /// Sum of `n·dx` over the stack cells.
    pub fn optical_thickness_nm(&self) -> f64 {
        self.permittivity[self.stack_cells.clone()].iter().map(|e| e.sqrt() * self.dx_nm).sum()
    }

    pub fn max_index(&self) -> f64 {
        self.permittivity.iter().fold(1.0, |m: f64, &e| m.max(e.sqrt()))
    }

    /// Cells per wavelength at `wavelength_nm` in the densest medium.
    pub fn cells_per_wavelength(&self, wavelength_nm: f64) -> f64 {
        wavelength_nm / (self.max_index() * self.dx_nm)
    }

    /// The same grid with every cell set to the ambient permittivity.
    pub fn ambient_only(&self) -> Self {
        let eps = self.permittivity[0];
        let mut g = self.clone();
        g.permittivity.iter_mut().for_each(|e| *e = eps);
        g
    }

    /// Same permittivity with a different absorber depth (0 gives a closed,
    /// lossless box).
    pub fn with_absorber(mut self, cells: usize) -> Result<Self, FdtdError> {
        if 2 * cells >= self.len() {
            return Err(FdtdError::InvalidGrid("absorber thicker than the grid"));
        }
        self.absorber_cells = cells;
        Ok(self)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GridOptions {
    pub absorber_cells: usize,
    /// Homogeneous cells between absorber and stack on each side.
    pub pad_cells: usize,
}

impl Default for GridOptions {
    fn default() -> Self {
        Self { absorber_cells: DEFAULT_ABSORBER_CELLS, pad_cells: DEFAULT_PAD_CELLS }
    }
}

pub fn discretize_stack(stack: &LayerStack, dx_nm: f64) -> Result<Grid1D, FdtdError> {
    discretize_stack_with(stack, dx_nm, GridOptions::default())
}

/// Places the stack on a uniform grid. Layer boundaries are snapped to the
/// nearest cell edge of their cumulative position, so each boundary moves by
/// at most `dx/2` and thickness errors never accumulate.
pub fn discretize_stack_with(stack: &LayerStack, dx_nm: f64, opts: GridOptions) -> Result<Grid1D, FdtdError> {
    if !(dx_nm > 0.0) || !dx_nm.is_finite() {
        return Err(FdtdError::InvalidGrid("dx must be positive"));
    }
    let n_max =
        stack.layers().iter().map(|l| l.index).fold(stack.ambient_index().max(stack.substrate_index()), f64::max);
    let cpw = DESIGN_WAVELENGTH_NM / (n_max * dx_nm);
    if cpw < MIN_CELLS_PER_WAVELENGTH {
        return Err(FdtdError::ResolutionTooCoarse {
            dx_nm,
            cells_per_wavelength: cpw,
            required: MIN_CELLS_PER_WAVELENGTH,
        });
    }
    let lead = opts.absorber_cells + opts.pad_cells;
    let mut permittivity = alloc::vec![stack.ambient_index().powi(2); lead];
    let mut layer_cells = Vec::with_capacity(stack.layers().len());
    let mut snapped_layers = Vec::with_capacity(stack.layers().len());
    let mut position = 0.0;
    let mut edge = 0usize;
    for layer in stack.layers() {
        position += layer.thickness_nm;
        let next = (position / dx_nm).round() as usize;
        let cells = next.saturating_sub(edge);
        permittivity.extend(core::iter::repeat_n(layer.index * layer.index, cells));
        layer_cells.push(lead + edge..lead + edge + cells);
        snapped_layers.push(Layer::new(cells as f64 * dx_nm, layer.index, String::from(layer.label.as_str()))?);
        edge += cells;
    }
    let stack_cells = lead..lead + edge;
    permittivity.extend(core::iter::repeat_n(stack.substrate_index().powi(2), lead));
    let snapped = LayerStack::new(stack.ambient_index(), snapped_layers, stack.substrate_index())?;
    Ok(Grid1D { dx_nm, permittivity, absorber_cells: opts.absorber_cells, stack_cells, layer_cells, snapped })
}

/// A homogeneous grid of `cells` cells.
pub fn uniform_grid(index: f64, cells: usize, dx_nm: f64, absorber_cells: usize) -> Result<Grid1D, FdtdError> {
    if index < 1.0 || !(dx_nm > 0.0) || cells < 2 * absorber_cells + 4 {
        return Err(FdtdError::InvalidGrid("need index >= 1, dx > 0 and room inside the absorbers"));
    }
    let half = cells / 2;
    let snapped = LayerStack::new(index, Vec::new(), index)?;
    Ok(Grid1D {
        dx_nm,
        permittivity: alloc::vec![index * index; cells],
        absorber_cells,
        stack_cells: half..half,
        layer_cells: Vec::new(),
        snapped,
    })
}

/// Time-stepping state over a grid.
#[derive(Debug, Clone)]
pub struct Simulation {
    dt: f64,
    e: Vec<f64>,
    h: Vec<f64>,
    eps: Vec<f64>,
    ce: Vec<f64>,
    de: Vec<f64>,
    ch: Vec<f64>,
    dh: Vec<f64>,
    steps: u64,
}

/// Loss parameter `σ·dt/(2ε)` of the absorber at depth fraction `u ∈ [0, 1]`.
fn absorber_loss(u: f64, index: f64, depth_cells: usize, courant: f64) -> f64 {
    if depth_cells == 0 {
        return 0.0;
    }
    // Normal-incidence round-trip reflection of the continuous profile is
    // exp(−l_max·n·D/S); aim for 1e−8.
    let l_max = courant * 18.42 / (index * depth_cells as f64);
    l_max * u.clamp(0.0, 1.0).powi(3)
}

impl Simulation {
    pub fn new(grid: &Grid1D) -> Self {
        Self::with_courant(grid, COURANT)
    }

    pub fn with_courant(grid: &Grid1D, courant: f64) -> Self {
        let n = grid.len() + 1;
        let cells = &grid.permittivity;
        let d = grid.absorber_cells as f64;
        let total = grid.len() as f64;
        // Node permittivity: mean of the two adjacent cells.
        let eps: Vec<f64> = (0..n)
            .map(|i| {
                let left = cells[i.saturating_sub(1).min(cells.len() - 1)];
                let right = cells[i.min(cells.len() - 1)];
                0.5 * (left + right)
            })
            .collect();
        let depth = |x: f64| -> f64 {
            if d == 0.0 {
                0.0
            } else if x < d {
                (d - x) / d
            } else if x > total - d {
                (x - (total - d)) / d
            } else {
                0.0
            }
        };
        let side_index = |x: f64| if x < total / 2.0 { cells[0].sqrt() } else { cells[cells.len() - 1].sqrt() };
        let mut ce = alloc::vec![0.0; n];
        let mut de = alloc::vec![0.0; n];
        for i in 1..n - 1 {
            let x = i as f64;
            let l = absorber_loss(depth(x), side_index(x), grid.absorber_cells, courant);
            ce[i] = (1.0 - l) / (1.0 + l);
            de[i] = courant / eps[i] / (1.0 + l);
        }
        let mut ch = alloc::vec![0.0; n - 1];
        let mut dh = alloc::vec![0.0; n - 1];
        for i in 0..n - 1 {
            let x = i as f64 + 0.5;
            let l = absorber_loss(depth(x), side_index(x), grid.absorber_cells, courant);
            ch[i] = (1.0 - l) / (1.0 + l);
            dh[i] = courant / (1.0 + l);
        }
        Self {
            dt: courant * grid.dx_nm,
            e: alloc::vec![0.0; n],
            h: alloc::vec![0.0; n - 1],
            eps,
            ce,
            de,
            ch,
            dh,
            steps: 0,
        }
    }

    /// Time step in nm of light travel.
    pub fn dt_nm(&self) -> f64 {
        self.dt
    }

    pub fn steps(&self) -> u64 {
        self.steps
    }

    /// Time of the current `E` field.
    pub fn time_nm(&self) -> f64 {
        self.steps as f64 * self.dt
    }

    pub fn e(&self) -> &[f64] {
        &self.e
    }

    pub fn h(&self) -> &[f64] {
        &self.h
    }

    /// Soft source: adds to `E` at node `node`.
    pub fn inject(&mut self, node: usize, value: f64) {
        self.e[node] += value;
    }

    pub fn step(&mut self) {
        self.update_h(|_, _| {});
        self.update_e();
    }

    /// Steps once and returns the discrete energy `½Σ ε E² + ½Σ H⁻H⁺` at the
    /// time of the pre-step `E` (exactly conserved without loss).
    pub fn step_with_energy(&mut self) -> f64 {
        let electric: f64 = self.e.iter().zip(&self.eps).map(|(e, eps)| eps * e * e).sum();
        let mut magnetic = 0.0;
        self.update_h(|old, new| magnetic += old * new);
        self.update_e();
        0.5 * (electric + magnetic)
    }

    fn update_h(&mut self, mut observe: impl FnMut(f64, f64)) {
        let coeffs = self.ch.iter().zip(&self.dh);
        for ((h, (ch, dh)), e) in self.h.iter_mut().zip(coeffs).zip(self.e.windows(2)) {
            let old = *h;
            *h = ch * old + dh * (e[1] - e[0]);
            observe(old, *h);
        }
    }

    fn update_e(&mut self) {
        let n = self.e.len();
        let coeffs = self.ce[1..n - 1].iter().zip(&self.de[1..n - 1]);
        for ((e, (ce, de)), h) in self.e[1..n - 1].iter_mut().zip(coeffs).zip(self.h.windows(2)) {
            *e = ce * *e + de * (h[1] - h[0]);
        }
        self.steps += 1;
    }
}

/// Gaussian-modulated sinusoid with spectral half-width (1/e amplitude)
/// `bandwidth_nm` around `center_nm`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GaussianPulse {
    pub omega: f64,
    pub width: f64,
    pub delay: f64,
}

impl GaussianPulse {
    pub fn new(center_nm: f64, bandwidth_nm: f64) -> Result<Self, FdtdError> {
        if !(center_nm > 0.0) || !(bandwidth_nm > 0.0) || bandwidth_nm >= center_nm {
            return Err(FdtdError::InvalidSource("need 0 < bandwidth < center wavelength"));
        }
        let df = bandwidth_nm / (center_nm * center_nm);
        let width = 1.0 / (PI * df);
        Ok(Self { omega: 2.0 * PI / center_nm, width, delay: 5.0 * width })
    }

    pub fn value(&self, t: f64) -> f64 {
        let u = (t - self.delay) / self.width;
        (-u * u).exp() * (self.omega * (t - self.delay)).sin()
    }

    /// Time after which the pulse is negligible.
    pub fn end(&self) -> f64 {
        2.0 * self.delay
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ReflectanceOptions {
    /// Hard limit on the length of the run with the stack in place.
    pub max_steps: u64,
    /// The run stops once the reflected field over the last check block is
    /// below `tolerance` times the incident peak.
    pub tolerance: f64,
    pub samples: usize,
    /// Probe sample decimation for the Fourier transform.
    pub decimation: usize,
}

impl Default for ReflectanceOptions {
    fn default() -> Self {
        Self { max_steps: 10_000_000, tolerance: 1e-4, samples: 401, decimation: 8 }
    }
}

const CHECK_BLOCK: u64 = 10_000;

pub fn run_reflectance(
    grid: &Grid1D,
    pulse_center_nm: f64,
    pulse_bandwidth_nm: f64,
) -> Result<ReflectanceSpectrum, FdtdError> {
    run_reflectance_with(grid, pulse_center_nm, pulse_bandwidth_nm, ReflectanceOptions::default())
}

/// Reflectance on `center ± bandwidth` from a pulse launched in the ambient
/// pad. The incident field is taken from a run with the stack removed; the
/// reflected field is the difference of the two probe records. The run with
/// the stack continues until the cavity has rung down.
pub fn run_reflectance_with(
    grid: &Grid1D,
    pulse_center_nm: f64,
    pulse_bandwidth_nm: f64,
    opts: ReflectanceOptions,
) -> Result<ReflectanceSpectrum, FdtdError> {
    let pulse = GaussianPulse::new(pulse_center_nm, pulse_bandwidth_nm)?;
    let lo = pulse_center_nm - pulse_bandwidth_nm;
    let cpw = grid.cells_per_wavelength(lo);
    if cpw < MIN_CELLS_PER_WAVELENGTH {
        return Err(FdtdError::ResolutionTooCoarse {
            dx_nm: grid.dx_nm,
            cells_per_wavelength: cpw,
            required: MIN_CELLS_PER_WAVELENGTH,
        });
    }
    if opts.samples < 2 || opts.decimation == 0 || !(opts.tolerance > 0.0) {
        return Err(FdtdError::InvalidSource("need samples >= 2, decimation >= 1 and a positive tolerance"));
    }
    let pad_start = grid.absorber_cells;
    let pad_end = grid.stack_cells.start;
    if pad_end < pad_start + 8 {
        return Err(FdtdError::InvalidGrid("ambient pad too thin for source and probe"));
    }
    let source = pad_start + (pad_end - pad_start) / 8;
    let probe = pad_start + (pad_end - pad_start) / 2;
    let dec = opts.decimation as u64;

    // Incident field: long enough for the pulse to pass the probe and leave
    // through the absorber.
    let mut sim = Simulation::new(&grid.ambient_only());
    let ref_steps = ((pulse.end() / sim.dt_nm()) as u64 + 4 * grid.len() as u64).div_ceil(dec) * dec;
    let mut incident = Vec::with_capacity((ref_steps / dec) as usize);
    for n in 0..ref_steps {
        sim.step();
        let t = sim.time_nm();
        if t <= pulse.end() {
            sim.inject(source, pulse.value(t));
        }
        if n % dec == 0 {
            incident.push(sim.e[probe]);
        }
    }
    let peak = incident.iter().fold(0.0, |m: f64, v| m.max(v.abs()));

    let mut sim = Simulation::new(grid);
    let mut total = Vec::with_capacity(incident.len());
    let mut block_max = 0.0f64;
    for n in 0..opts.max_steps.max(ref_steps) {
        sim.step();
        let t = sim.time_nm();
        if t <= pulse.end() {
            sim.inject(source, pulse.value(t));
        }
        if n % dec == 0 {
            let k = total.len();
            let v = sim.e[probe];
            block_max = block_max.max((v - incident.get(k).copied().unwrap_or(0.0)).abs());
            total.push(v);
        }
        if (n + 1) % CHECK_BLOCK == 0 {
            if n + 1 >= ref_steps && block_max < opts.tolerance * peak {
                break;
            }
            block_max = 0.0;
        }
    }
    incident.resize(total.len().max(incident.len()), 0.0);
    let dt = grid.dx_nm * COURANT * opts.decimation as f64;
    let wavelengths_nm = linspace(lo, pulse_center_nm + pulse_bandwidth_nm, opts.samples);
    let reflectance = wavelengths_nm
        .iter()
        .map(|&lambda| {
            let rot = Complex64::from_polar(1.0, -2.0 * PI / lambda * dt);
            let mut phase = Complex64::new(1.0, 0.0);
            let (mut inc, mut refl) = (Complex64::new(0.0, 0.0), Complex64::new(0.0, 0.0));
            for (k, (&a, &b)) in total.iter().zip(&incident).enumerate() {
                inc += phase * b;
                refl += phase * (a - b);
                phase *= rot;
                if k % 1024 == 1023 {
                    phase /= phase.norm();
                }
            }
            refl.norm_sqr() / inc.norm_sqr()
        })
        .collect();
    Ok(ReflectanceSpectrum { wavelengths_nm, reflectance })
}

/// Field at one node sampled every simulation step after the source has
/// turned off.
#[derive(Debug, Clone, PartialEq)]
pub struct RingdownRecord {
    pub probe_times_ns: Vec<f64>,
    pub field_samples: Vec<f64>,
    pub omega0_rad_per_ns: f64,
    /// Total steps simulated, including excitation and settling.
    pub total_steps: u64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RingdownOptions {
    pub bandwidth_nm: f64,
    /// Steps to wait after the source turns off.
    pub settle_steps: u64,
    pub record_steps: u64,
}

impl Default for RingdownOptions {
    fn default() -> Self {
        Self { bandwidth_nm: 10.0, settle_steps: 20_000, record_steps: 900_000 }
    }
}

pub fn run_ringdown(grid: &Grid1D, source_cell: usize, lambda0_nm: f64) -> Result<(f64, RingdownRecord), FdtdError> {
    run_ringdown_with(grid, source_cell, lambda0_nm, RingdownOptions::default())
}

/// Excites the structure at `source_cell` with a narrowband pulse at
/// `lambda0_nm`, records the field there after turn-off and fits the decay
/// of the stored-energy envelope.
pub fn run_ringdown_with(
    grid: &Grid1D,
    source_cell: usize,
    lambda0_nm: f64,
    opts: RingdownOptions,
) -> Result<(f64, RingdownRecord), FdtdError> {
    if source_cell == 0 || source_cell >= grid.len() {
        return Err(FdtdError::InvalidSource("source cell outside the grid"));
    }
    let pulse = GaussianPulse::new(lambda0_nm, opts.bandwidth_nm)?;
    let cpw = grid.cells_per_wavelength(lambda0_nm - opts.bandwidth_nm);
    if cpw < MIN_CELLS_PER_WAVELENGTH {
        return Err(FdtdError::ResolutionTooCoarse {
            dx_nm: grid.dx_nm,
            cells_per_wavelength: cpw,
            required: MIN_CELLS_PER_WAVELENGTH,
        });
    }
    let mut sim = Simulation::new(grid);
    while sim.time_nm() <= pulse.end() {
        sim.step();
        let t = sim.time_nm();
        sim.inject(source_cell, pulse.value(t));
    }
    for _ in 0..opts.settle_steps {
        sim.step();
    }
    let mut probe_times_ns = Vec::with_capacity(opts.record_steps as usize);
    let mut field_samples = Vec::with_capacity(opts.record_steps as usize);
    for _ in 0..opts.record_steps {
        sim.step();
        probe_times_ns.push(sim.time_nm() / SPEED_OF_LIGHT_NM_PER_NS);
        field_samples.push(sim.e[source_cell]);
    }
    let record = RingdownRecord {
        probe_times_ns,
        field_samples,
        omega0_rad_per_ns: 2.0 * PI * SPEED_OF_LIGHT_NM_PER_NS / lambda0_nm,
        total_steps: sim.steps,
    };
    let q = q_from_record(&record)?;
    Ok((q, record))
}

/// Mean of `E²` over consecutive windows of about 20 optical periods.
/// Returns `(window centre time, mean)` pairs.
pub fn energy_envelope(record: &RingdownRecord) -> Result<Vec<(f64, f64)>, FdtdError> {
    let t = &record.probe_times_ns;
    let f = &record.field_samples;
    if t.len() != f.len() || t.len() < 2 {
        return Err(FdtdError::FitDiverged("record too short"));
    }
    let dt = (t[t.len() - 1] - t[0]) / (t.len() - 1) as f64;
    if !(dt > 0.0) || !(record.omega0_rad_per_ns > 0.0) {
        return Err(FdtdError::FitDiverged("record needs increasing times and positive ω₀"));
    }
    let half_period = PI / (record.omega0_rad_per_ns * dt);
    let window = ((40.0 * half_period).round() as usize).max(1);
    Ok(t.chunks_exact(window)
        .zip(f.chunks_exact(window))
        .map(|(tc, fc)| {
            let mid = 0.5 * (tc[0] + tc[tc.len() - 1]);
            (mid, fc.iter().map(|v| v * v).sum::<f64>() / window as f64)
        })
        .collect())
}

/// Q from a log-linear fit of the energy envelope, `U ∝ exp(−ω₀ t/Q)`.
pub fn q_from_record(record: &RingdownRecord) -> Result<f64, FdtdError> {
    let env = energy_envelope(record)?;
    if env.len() < 8 {
        return Err(FdtdError::FitDiverged("record shorter than eight envelope windows"));
    }
    let peak = env.iter().fold(0.0, |m: f64, p| m.max(p.1));
    if !(peak > 0.0) {
        return Err(FdtdError::NoDecayDetected(NoDecay::NothingStored));
    }
    let pts: Vec<(f64, f64)> = env.iter().filter(|p| p.1 > 1e-300).map(|p| (p.0, p.1.ln())).collect();
    if pts.len() < 8 {
        return Err(FdtdError::FitDiverged("too few non-zero envelope samples"));
    }
    let rows: Vec<[f64; 2]> = pts.iter().map(|p| [1.0, p.0 - pts[0].0]).collect();
    let y: Vec<f64> = pts.iter().map(|p| p.1).collect();
    let ones = alloc::vec![1.0; y.len()];
    let ([a, slope], _) = fit::linear_lsq(&rows, &y, &ones).ok_or(FdtdError::FitDiverged("singular fit"))?;
    let span = pts[pts.len() - 1].0 - pts[0].0;
    let decay = -slope * span;
    if !(decay >= 0.05) {
        return Err(FdtdError::NoDecayDetected(NoDecay::Undamped {
            q_lower_bound: record.omega0_rad_per_ns * span / 0.05,
        }));
    }
    let rms = (rows.iter().zip(&y).map(|(r, yi)| (a + slope * r[1] - yi).powi(2)).sum::<f64>() / y.len() as f64).sqrt();
    if rms > 0.1 * decay {
        return Err(FdtdError::FitDiverged("envelope is not exponential"));
    }
    Ok(-record.omega0_rad_per_ns / slope)
}
