//! Normal-incidence transfer-matrix optics for planar layer stacks.
//!
//! Layers are lossless and non-dispersive. A stack is read from the incidence
//! side: ambient medium, layers top to bottom, then a semi-infinite substrate.

use alloc::string::String;
use alloc::vec::Vec;
use core::f64::consts::PI;

use num_complex::Complex64;
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum CavityError {
    #[error("layer `{label}` has invalid thickness {thickness} nm (must be finite and >= 0)")]
    InvalidThickness { label: String, thickness: f64 },
    #[error("refractive index {index} of `{label}` is below 1")]
    InvalidIndex { label: String, index: f64 },
    #[error("wavelength must be positive, got {0} nm")]
    InvalidWavelength(f64),
    #[error("invalid spectral range [{min}, {max}] nm with {samples} samples")]
    InvalidRange { min: f64, max: f64, samples: usize },
    #[error("no stopband: no contiguous region with reflectance above {threshold}")]
    NoStopband { threshold: f64 },
    #[error("no dip: stopband [{lo:.3}, {hi:.3}] nm has no interior reflectance minimum")]
    NoDip { lo: f64, hi: f64 },
}

/// A homogeneous dielectric layer.
#[derive(Debug, Clone, PartialEq)]
pub struct Layer {
    pub thickness_nm: f64,
    pub index: f64,
    pub label: String,
}

impl Layer {
    pub fn new(thickness_nm: f64, index: f64, label: impl Into<String>) -> Result<Self, CavityError> {
        let label = label.into();
        if !thickness_nm.is_finite() || thickness_nm < 0.0 {
            return Err(CavityError::InvalidThickness { label, thickness: thickness_nm });
        }
        check_index(index, &label)?;
        Ok(Self { thickness_nm, index, label })
    }

    /// Phase thickness `2π n d / λ`.
    pub fn phase(&self, wavelength_nm: f64) -> f64 {
        2.0 * PI * self.index * self.thickness_nm / wavelength_nm
    }
}

fn check_index(index: f64, label: &str) -> Result<(), CavityError> {
    if !index.is_finite() || index < 1.0 {
        return Err(CavityError::InvalidIndex { label: label.into(), index });
    }
    Ok(())
}

/// Ambient medium, ordered layers (top to bottom) and substrate.
#[derive(Debug, Clone, PartialEq)]
pub struct LayerStack {
    ambient_index: f64,
    layers: Vec<Layer>,
    substrate_index: f64,
}

impl LayerStack {
    pub fn new(ambient_index: f64, layers: Vec<Layer>, substrate_index: f64) -> Result<Self, CavityError> {
        check_index(ambient_index, "ambient")?;
        check_index(substrate_index, "substrate")?;
        for layer in &layers {
            if !layer.thickness_nm.is_finite() || layer.thickness_nm < 0.0 {
                return Err(CavityError::InvalidThickness {
                    label: layer.label.clone(),
                    thickness: layer.thickness_nm,
                });
            }
            check_index(layer.index, &layer.label)?;
        }
        Ok(Self { ambient_index, layers, substrate_index })
    }

    pub fn ambient_index(&self) -> f64 {
        self.ambient_index
    }

    pub fn substrate_index(&self) -> f64 {
        self.substrate_index
    }

    pub fn layers(&self) -> &[Layer] {
        &self.layers
    }

    pub fn total_thickness_nm(&self) -> f64 {
        self.layers.iter().map(|l| l.thickness_nm).sum()
    }

    /// Sum of `n·d` over the layers.
    pub fn optical_thickness_nm(&self) -> f64 {
        self.layers.iter().map(|l| l.index * l.thickness_nm).sum()
    }

    /// Index of the first layer carrying `label`.
    pub fn find_layer(&self, label: &str) -> Option<usize> {
        self.layers.iter().position(|l| l.label == label)
    }

    /// The same structure seen from the substrate side.
    pub fn reversed(&self) -> Self {
        let mut layers = self.layers.clone();
        layers.reverse();
        Self { ambient_index: self.substrate_index, layers, substrate_index: self.ambient_index }
    }

    pub fn with_media(mut self, ambient_index: f64, substrate_index: f64) -> Result<Self, CavityError> {
        check_index(ambient_index, "ambient")?;
        check_index(substrate_index, "substrate")?;
        self.ambient_index = ambient_index;
        self.substrate_index = substrate_index;
        Ok(self)
    }
}

/// Parameters of the planar micropost stack.
#[derive(Debug, Clone, PartialEq)]
pub struct MicropostDesign {
    pub top_pairs: usize,
    pub bottom_pairs: usize,
    pub spacer_nm: f64,
    pub gaas_nm: f64,
    pub alas_nm: f64,
    pub n_gaas: f64,
    pub n_alas: f64,
    pub cap: Option<Layer>,
    pub ambient_index: f64,
    pub substrate_index: f64,
}

impl Default for MicropostDesign {
    fn default() -> Self {
        Self {
            top_pairs: 12,
            bottom_pairs: 30,
            spacer_nm: 274.0,
            gaas_nm: 68.6,
            alas_nm: 81.4,
            n_gaas: 3.5,
            n_alas: 2.9,
            cap: None,
            ambient_index: 1.0,
            substrate_index: 3.5,
        }
    }
}

/// Label given to the cavity spacer layer.
pub const SPACER_LABEL: &str = "spacer";

/// Builds `cap? | (GaAs/AlAs)×top | spacer | (AlAs/GaAs)×bottom`.
pub fn build_micropost_stack(design: &MicropostDesign) -> Result<LayerStack, CavityError> {
    for (label, d) in [("spacer", design.spacer_nm), ("GaAs", design.gaas_nm), ("AlAs", design.alas_nm)] {
        if !d.is_finite() || d <= 0.0 {
            return Err(CavityError::InvalidThickness { label: label.into(), thickness: d });
        }
    }
    let gaas = Layer::new(design.gaas_nm, design.n_gaas, "GaAs")?;
    let alas = Layer::new(design.alas_nm, design.n_alas, "AlAs")?;
    let spacer = Layer::new(design.spacer_nm, design.n_gaas, SPACER_LABEL)?;

    let mut layers = Vec::with_capacity(2 * (design.top_pairs + design.bottom_pairs) + 2);
    if let Some(cap) = &design.cap {
        if cap.thickness_nm <= 0.0 {
            return Err(CavityError::InvalidThickness { label: cap.label.clone(), thickness: cap.thickness_nm });
        }
        layers.push(cap.clone());
    }
    for _ in 0..design.top_pairs {
        layers.push(gaas.clone());
        layers.push(alas.clone());
    }
    layers.push(spacer);
    for _ in 0..design.bottom_pairs {
        layers.push(alas.clone());
        layers.push(gaas.clone());
    }
    LayerStack::new(design.ambient_index, layers, design.substrate_index)
}

/// 2×2 complex characteristic matrix.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Matrix2(pub [[Complex64; 2]; 2]);

impl Matrix2 {
    pub const IDENTITY: Self = Self([
        [Complex64::new(1.0, 0.0), Complex64::new(0.0, 0.0)],
        [Complex64::new(0.0, 0.0), Complex64::new(1.0, 0.0)],
    ]);

    pub fn mul(&self, rhs: &Self) -> Self {
        let a = &self.0;
        let b = &rhs.0;
        Self([
            [a[0][0] * b[0][0] + a[0][1] * b[1][0], a[0][0] * b[0][1] + a[0][1] * b[1][1]],
            [a[1][0] * b[0][0] + a[1][1] * b[1][0], a[1][0] * b[0][1] + a[1][1] * b[1][1]],
        ])
    }

    pub fn det(&self) -> Complex64 {
        self.0[0][0] * self.0[1][1] - self.0[0][1] * self.0[1][0]
    }
}

/// Characteristic matrix `[[cos δ, i sin δ / n], [i n sin δ, cos δ]]`.
pub fn layer_matrix(layer: &Layer, wavelength_nm: f64) -> Result<Matrix2, CavityError> {
    if !(wavelength_nm > 0.0) || !wavelength_nm.is_finite() {
        return Err(CavityError::InvalidWavelength(wavelength_nm));
    }
    Ok(characteristic(layer.index, layer.phase(wavelength_nm)))
}

fn characteristic(n: f64, delta: f64) -> Matrix2 {
    let (s, c) = delta.sin_cos();
    Matrix2([
        [Complex64::new(c, 0.0), Complex64::new(0.0, s / n)],
        [Complex64::new(0.0, n * s), Complex64::new(c, 0.0)],
    ])
}

/// Amplitude reflection coefficient on the ambient side.
pub fn reflection_coefficient(stack: &LayerStack, wavelength_nm: f64) -> Result<Complex64, CavityError> {
    if !(wavelength_nm > 0.0) || !wavelength_nm.is_finite() {
        return Err(CavityError::InvalidWavelength(wavelength_nm));
    }
    let m =
        stack.layers.iter().fold(Matrix2::IDENTITY, |acc, l| acc.mul(&characteristic(l.index, l.phase(wavelength_nm))));
    let ns = Complex64::new(stack.substrate_index, 0.0);
    let n0 = Complex64::new(stack.ambient_index, 0.0);
    let b = m.0[0][0] + m.0[0][1] * ns;
    let c = m.0[1][0] + m.0[1][1] * ns;
    Ok((n0 * b - c) / (n0 * b + c))
}

/// Power reflectance `|r|²`.
pub fn reflectance(stack: &LayerStack, wavelength_nm: f64) -> Result<f64, CavityError> {
    reflection_coefficient(stack, wavelength_nm).map(|r| r.norm_sqr())
}

/// Uniformly sampled reflectance.
#[derive(Debug, Clone, PartialEq)]
pub struct ReflectanceSpectrum {
    pub wavelengths_nm: Vec<f64>,
    pub reflectance: Vec<f64>,
}

impl ReflectanceSpectrum {
    pub fn len(&self) -> usize {
        self.wavelengths_nm.len()
    }

    pub fn is_empty(&self) -> bool {
        self.wavelengths_nm.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (f64, f64)> + '_ {
        self.wavelengths_nm.iter().copied().zip(self.reflectance.iter().copied())
    }
}

/// Default sampling used for resonance extraction.
pub const DEFAULT_SPECTRUM: (f64, f64, usize) = (850.0, 1050.0, 20_001);

/// Uniformly spaced wavelengths on `[min, max]`, both ends included.
pub fn linspace(min: f64, max: f64, samples: usize) -> Vec<f64> {
    let step = (max - min) / (samples - 1) as f64;
    (0..samples).map(|i| if i + 1 == samples { max } else { min + step * i as f64 }).collect()
}

pub fn reflectance_spectrum(
    stack: &LayerStack,
    min_nm: f64,
    max_nm: f64,
    samples: usize,
) -> Result<ReflectanceSpectrum, CavityError> {
    if !(min_nm > 0.0) || !(max_nm > min_nm) || samples < 2 || !max_nm.is_finite() {
        return Err(CavityError::InvalidRange { min: min_nm, max: max_nm, samples });
    }
    let wavelengths_nm = linspace(min_nm, max_nm, samples);
    let reflectance = wavelengths_nm.iter().map(|&l| reflectance(stack, l)).collect::<Result<Vec<_>, _>>()?;
    Ok(ReflectanceSpectrum { wavelengths_nm, reflectance })
}

/// Resonance extracted from a reflectance dip.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ResonanceResult {
    pub lambda_c_nm: f64,
    pub fwhm_nm: f64,
    pub q_factor: f64,
    pub stopband_nm: (f64, f64),
    /// Reflectance at the dip minimum.
    pub dip_reflectance: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ResonanceOptions {
    /// Reflectance level defining the stopband.
    pub stopband_threshold: f64,
}

impl Default for ResonanceOptions {
    fn default() -> Self {
        Self { stopband_threshold: 0.95 }
    }
}

/// Locates the cavity dip inside the stopband and measures its width.
///
/// The stopband is the widest run of samples at or above the threshold, where
/// runs separated by a gap narrower than both neighbours are merged (so a deep
/// dip does not split the band). The dip is the interior local minimum with
/// the largest prominence; its centre is refined with a parabola through the
/// three lowest samples and its width is taken at half depth between the
/// minimum and the lower of the two shoulders.
pub fn find_resonance(
    spectrum: &ReflectanceSpectrum,
    options: ResonanceOptions,
) -> Result<ResonanceResult, CavityError> {
    let lam = &spectrum.wavelengths_nm;
    let r = &spectrum.reflectance;
    let threshold = options.stopband_threshold;
    let no_stopband = CavityError::NoStopband { threshold };
    if lam.len() < 3 || lam.len() != r.len() {
        return Err(no_stopband);
    }

    let mut runs: Vec<(usize, usize)> = Vec::new();
    let mut start = None;
    for (i, &v) in r.iter().enumerate() {
        match (v >= threshold, start) {
            (true, None) => start = Some(i),
            (false, Some(s)) => {
                runs.push((s, i - 1));
                start = None;
            }
            _ => {}
        }
    }
    if let Some(s) = start {
        runs.push((s, r.len() - 1));
    }
    // The widest run is the core of the stopband. A neighbouring run is joined
    // across a short gap (a deep dip) but only if it is not a thin side lobe.
    let width = |r: &(usize, usize)| r.1 - r.0 + 1;
    let core = (0..runs.len())
        .max_by(|&a, &b| (lam[runs[a].1] - lam[runs[a].0]).total_cmp(&(lam[runs[b].1] - lam[runs[b].0])))
        .ok_or(no_stopband.clone())?;
    let joinable = |gap: usize, side: usize, core: usize| gap < side && gap < core && 4 * side >= core;
    let (mut first, mut last) = (core, core);
    let (mut lo, mut hi) = runs[core];
    while first > 0 && joinable(lo - runs[first - 1].1 - 1, width(&runs[first - 1]), hi - lo + 1) {
        first -= 1;
        lo = runs[first].0;
    }
    while last + 1 < runs.len() && joinable(runs[last + 1].0 - hi - 1, width(&runs[last + 1]), hi - lo + 1) {
        last += 1;
        hi = runs[last].1;
    }
    if hi - lo < 2 {
        return Err(no_stopband);
    }
    let no_dip = CavityError::NoDip { lo: lam[lo], hi: lam[hi] };

    // Most prominent interior local minimum.
    let mut best: Option<(usize, f64, f64)> = None;
    for i in lo + 1..hi {
        if !(r[i] < r[i - 1] && r[i] <= r[i + 1]) {
            continue;
        }
        let mut left = i;
        while left > lo && r[left - 1] >= r[left] {
            left -= 1;
        }
        let mut right = i;
        while right < hi && r[right + 1] >= r[right] {
            right += 1;
        }
        let shoulder = r[left].min(r[right]);
        let prominence = shoulder - r[i];
        if best.is_none_or(|(_, p, _)| prominence > p) {
            best = Some((i, prominence, shoulder));
        }
    }
    let (i, prominence, shoulder) = best.ok_or(no_dip.clone())?;
    if !(prominence > 1e-12) {
        return Err(no_dip);
    }

    let (lambda_c, r_min) = parabolic_vertex((lam[i - 1], r[i - 1]), (lam[i], r[i]), (lam[i + 1], r[i + 1]));
    let half = 0.5 * (r_min + shoulder);
    let mut a = i;
    while a > lo && r[a] < half {
        a -= 1;
    }
    let mut b = i;
    while b < hi && r[b] < half {
        b += 1;
    }
    if r[a] < half || r[b] < half {
        return Err(no_dip);
    }
    let left = interpolate_crossing((lam[a], r[a]), (lam[a + 1], r[a + 1]), half);
    let right = interpolate_crossing((lam[b - 1], r[b - 1]), (lam[b], r[b]), half);
    let fwhm = right - left;
    if !(fwhm > 0.0) {
        return Err(no_dip);
    }
    Ok(ResonanceResult {
        lambda_c_nm: lambda_c,
        fwhm_nm: fwhm,
        q_factor: lambda_c / fwhm,
        stopband_nm: (lam[lo], lam[hi]),
        dip_reflectance: r_min,
    })
}

fn parabolic_vertex(p0: (f64, f64), p1: (f64, f64), p2: (f64, f64)) -> (f64, f64) {
    let (x0, y0) = p0;
    let (x1, y1) = p1;
    let (x2, y2) = p2;
    let d01 = (y1 - y0) / (x1 - x0);
    let d12 = (y2 - y1) / (x2 - x1);
    let a = (d12 - d01) / (x2 - x0);
    if !(a > 0.0) {
        return p1;
    }
    let b = d01 - a * (x0 + x1);
    let x = (-b / (2.0 * a)).clamp(x0, x2);
    let y = y1 + (x - x1) * (d01 + a * (x - x0));
    (x, y)
}

fn interpolate_crossing(p0: (f64, f64), p1: (f64, f64), level: f64) -> f64 {
    let (x0, y0) = p0;
    let (x1, y1) = p1;
    if y1 == y0 {
        return 0.5 * (x0 + x1);
    }
    x0 + (level - y0) * (x1 - x0) / (y1 - y0)
}
