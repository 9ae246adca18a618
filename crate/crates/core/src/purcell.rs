//! Emitter–cavity coupling: Lorentzian decay-rate model, Purcell factor,
//! temperature tuning and the corresponding fits.

use alloc::vec::Vec;

use thiserror::Error;

use crate::fit;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum PurcellError {
    #[error("invalid cavity mode: lambda_c = {lambda_c_nm} nm, Q = {q_factor}")]
    InvalidMode { lambda_c_nm: f64, q_factor: f64 },
    #[error("invalid decay model: gamma_max = {gamma_max}, gamma_min = {gamma_min} (need gamma_max >= gamma_min > 0)")]
    InvalidRates { gamma_max: f64, gamma_min: f64 },
    #[error("insufficient detuning span: {0}")]
    InsufficientSpan(&'static str),
    #[error("fit diverged: {0}")]
    FitDiverged(&'static str),
    #[error("temperature {temperature} K outside tuning range [{min}, {max}] K")]
    OutOfRange { temperature: f64, min: f64, max: f64 },
    #[error("invalid tuning table: {0}")]
    InvalidTable(&'static str),
    #[error("no peak in background spectrum")]
    NoPeak,
}

/// Cavity resonance and quality factor.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CavityMode {
    pub lambda_c_nm: f64,
    pub q_factor: f64,
}

impl CavityMode {
    pub fn new(lambda_c_nm: f64, q_factor: f64) -> Result<Self, PurcellError> {
        if !(lambda_c_nm > 0.0 && q_factor > 0.0) || !lambda_c_nm.is_finite() || !q_factor.is_finite() {
            return Err(PurcellError::InvalidMode { lambda_c_nm, q_factor });
        }
        Ok(Self { lambda_c_nm, q_factor })
    }

    /// Mode linewidth `λc / Q`.
    pub fn linewidth_nm(&self) -> f64 {
        self.lambda_c_nm / self.q_factor
    }
}

/// Decay rate as a Lorentzian of the emitter–cavity detuning.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DecayModel {
    pub gamma_max: f64,
    pub gamma_min: f64,
    pub mode: CavityMode,
}

impl DecayModel {
    pub fn new(gamma_max: f64, gamma_min: f64, mode: CavityMode) -> Result<Self, PurcellError> {
        if !(gamma_min > 0.0 && gamma_max >= gamma_min) || !gamma_max.is_finite() {
            return Err(PurcellError::InvalidRates { gamma_max, gamma_min });
        }
        Ok(Self { gamma_max, gamma_min, mode })
    }

    /// The shipped nominal dot: λc = 880 nm (nominal), Q = 1270,
    /// Γmax = 5 ns⁻¹, Γmin = 1 ns⁻¹.
    pub fn nominal() -> Self {
        Self { gamma_max: 5.0, gamma_min: 1.0, mode: CavityMode { lambda_c_nm: 880.0, q_factor: 1270.0 } }
    }
}

/// `1 / (1 + (2(λ_QD − λc)/Δλ)²)`.
pub fn lorentzian_coupling(lambda_qd_nm: f64, mode: &CavityMode) -> f64 {
    lorentzian(lambda_qd_nm - mode.lambda_c_nm, mode.linewidth_nm())
}

fn lorentzian(detuning: f64, width: f64) -> f64 {
    let x = 2.0 * detuning / width;
    1.0 / (1.0 + x * x)
}

/// Spontaneous decay rate in ns⁻¹ at the given emitter wavelength.
pub fn decay_rate(lambda_qd_nm: f64, model: &DecayModel) -> f64 {
    model.gamma_min + (model.gamma_max - model.gamma_min) * lorentzian_coupling(lambda_qd_nm, &model.mode)
}

/// On-resonance over off-resonance rate.
pub fn purcell_factor(model: &DecayModel) -> f64 {
    model.gamma_max / model.gamma_min
}

/// A fitted decay model with diagnostics.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DecayFit {
    pub model: DecayModel,
    /// Root of the residual sum of squares (ns⁻¹).
    pub residual_norm: f64,
    /// Standard errors of `(gamma_min, gamma_max, linewidth_nm)`.
    pub std_errors: [f64; 3],
}

impl DecayFit {
    pub fn linewidth_nm(&self) -> f64 {
        self.model.mode.linewidth_nm()
    }
}

/// Least-squares fit of `Γmin`, `Γmax` and the linewidth with the centre held
/// at `lambda_c_nm`. Points are `(λ_QD, Γ)`.
///
/// The linewidth is located first by a one-dimensional search (for a fixed
/// width the model is linear in the two rates), then all three parameters are
/// polished together and their covariance estimated from the Jacobian.
pub fn fit_decay_model(points: &[(f64, f64)], lambda_c_nm: f64) -> Result<DecayFit, PurcellError> {
    if points.len() < 4 {
        return Err(PurcellError::InsufficientSpan("need at least 4 points"));
    }
    let det: Vec<f64> = points.iter().map(|p| p.0 - lambda_c_nm).collect();
    let rate: Vec<f64> = points.iter().map(|p| p.1).collect();
    if det.iter().chain(&rate).any(|v| !v.is_finite()) {
        return Err(PurcellError::FitDiverged("non-finite input"));
    }
    let mut abs: Vec<f64> = det.iter().map(|d| d.abs()).collect();
    abs.sort_by(f64::total_cmp);
    let span = abs[abs.len() - 1] - abs[0];
    let scale = abs[abs.len() - 1].max(1e-12);
    let distinct = 1 + abs.windows(2).filter(|w| w[1] - w[0] > 1e-9 * scale).count();
    if distinct < 3 || !(span > 0.0) {
        return Err(PurcellError::InsufficientSpan("need at least 3 distinct |detuning| values"));
    }

    let ones = alloc::vec![1.0; det.len()];
    let linear = |w: f64| -> Option<([f64; 2], f64)> {
        let rows: Vec<[f64; 2]> = det.iter().map(|&d| [1.0, lorentzian(d, w)]).collect();
        let (c, _) = fit::linear_lsq(&rows, &rate, &ones)?;
        let rss = rows
            .iter()
            .zip(&rate)
            .map(|(r, y)| {
                let e = c[0] + c[1] * r[1] - y;
                e * e
            })
            .sum();
        Some((c, rss))
    };
    let min_step = abs.windows(2).map(|w| w[1] - w[0]).filter(|&s| s > 1e-9 * scale).fold(scale, f64::min);
    let (w0, _) =
        fit::log_scan_min(|w| linear(w).map_or(f64::INFINITY, |(_, rss)| rss), 0.05 * min_step, 200.0 * scale, 400);
    let (c0, _) = linear(w0).ok_or(PurcellError::FitDiverged("singular linear subproblem"))?;

    let out = fit::levenberg_marquardt(
        [c0[0], c0[0] + c0[1], w0],
        det.len(),
        |p, r, jac| {
            let (gmin, gmax, w) = (p[0], p[1], p[2]);
            for i in 0..det.len() {
                let l = lorentzian(det[i], w);
                r[i] = gmin + (gmax - gmin) * l - rate[i];
                // dL/dw = 8 d² / w³ · L²
                let dl_dw = 8.0 * det[i] * det[i] / (w * w * w) * l * l;
                jac[i] = [1.0 - l, l, (gmax - gmin) * dl_dw];
            }
        },
        200,
    )
    .ok_or(PurcellError::FitDiverged("non-finite residuals"))?;
    let [gmin, gmax, w] = out.params;
    if !(w > 0.0) || !gmin.is_finite() || !gmax.is_finite() || !(gmin > 0.0) || gmax < gmin {
        return Err(PurcellError::FitDiverged("fitted parameters outside the physical domain"));
    }
    if abs[abs.len() - 1] - abs[0] < 0.5 * w {
        return Err(PurcellError::InsufficientSpan("detunings cover less than one half-width of the fitted line"));
    }
    let dof = (det.len() as f64 - 3.0).max(1.0);
    let s2 = out.rss / dof;
    let std_errors = match out.inv_normal {
        Some(inv) => [0, 1, 2].map(|i| (inv[i][i] * s2).max(0.0).sqrt()),
        None => [f64::NAN; 3],
    };
    let mode = CavityMode::new(lambda_c_nm, lambda_c_nm / w)?;
    Ok(DecayFit {
        model: DecayModel { gamma_max: gmax, gamma_min: gmin, mode },
        residual_norm: out.rss.sqrt(),
        std_errors,
    })
}

/// Emitter wavelength as a tabulated function of temperature, plus a linear
/// red shift of the cavity over the tuning range.
#[derive(Debug, Clone, PartialEq)]
pub struct TuningMap {
    /// `(temperature K, λ_QD nm)`, strictly increasing in temperature.
    table: Vec<(f64, f64)>,
    /// Cavity resonance at the lowest tabulated temperature.
    pub lambda_c_at_min_nm: f64,
    /// Total cavity red shift across the table's temperature range.
    pub cavity_shift_nm: f64,
    pub cavity_shift_enabled: bool,
}

impl TuningMap {
    pub fn new(table: Vec<(f64, f64)>, lambda_c_at_min_nm: f64, cavity_shift_nm: f64) -> Result<Self, PurcellError> {
        if table.len() < 2 {
            return Err(PurcellError::InvalidTable("need at least two temperatures"));
        }
        if table.windows(2).any(|w| !(w[1].0 > w[0].0)) {
            return Err(PurcellError::InvalidTable("temperatures must be strictly increasing"));
        }
        let rising = table.windows(2).all(|w| w[1].1 >= w[0].1);
        let falling = table.windows(2).all(|w| w[1].1 <= w[0].1);
        if !(rising || falling) {
            return Err(PurcellError::InvalidTable("emitter wavelength must be monotone in temperature"));
        }
        Ok(Self { table, lambda_c_at_min_nm, cavity_shift_nm, cavity_shift_enabled: true })
    }

    pub fn range(&self) -> (f64, f64) {
        (self.table[0].0, self.table[self.table.len() - 1].0)
    }

    pub fn table(&self) -> &[(f64, f64)] {
        &self.table
    }

    pub fn lambda_qd_at(&self, temperature: f64) -> Result<f64, PurcellError> {
        let (min, max) = self.range();
        if !(temperature >= min && temperature <= max) {
            return Err(PurcellError::OutOfRange { temperature, min, max });
        }
        let k = self.table.windows(2).position(|w| temperature <= w[1].0).unwrap_or(self.table.len() - 2);
        let (t0, l0) = self.table[k];
        let (t1, l1) = self.table[k + 1];
        Ok(l0 + (l1 - l0) * (temperature - t0) / (t1 - t0))
    }

    pub fn lambda_c_at(&self, temperature: f64) -> Result<f64, PurcellError> {
        let (min, max) = self.range();
        if !(temperature >= min && temperature <= max) {
            return Err(PurcellError::OutOfRange { temperature, min, max });
        }
        let shift =
            if self.cavity_shift_enabled { self.cavity_shift_nm * (temperature - min) / (max - min) } else { 0.0 };
        Ok(self.lambda_c_at_min_nm + shift)
    }
}

/// Signed detuning `λ_QD(T) − λc(T)`.
pub fn detuning_at_temperature(map: &TuningMap, temperature: f64) -> Result<f64, PurcellError> {
    Ok(map.lambda_qd_at(temperature)? - map.lambda_c_at(temperature)?)
}

/// Fits `b + a / (1 + (2(λ−λc)/w)²)` to a background emission spectrum and
/// returns the cavity mode `(λc, λc/w)`.
pub fn fit_cavity_from_background(spectrum: &[(f64, f64)]) -> Result<CavityMode, PurcellError> {
    if spectrum.len() < 5 || spectrum.iter().any(|(l, i)| !l.is_finite() || !i.is_finite()) {
        return Err(PurcellError::NoPeak);
    }
    let lam: Vec<f64> = spectrum.iter().map(|p| p.0).collect();
    let y: Vec<f64> = spectrum.iter().map(|p| p.1).collect();
    let (imax, &ymax) = y.iter().enumerate().max_by(|a, b| a.1.total_cmp(b.1)).ok_or(PurcellError::NoPeak)?;
    let mut sorted = y.clone();
    sorted.sort_by(f64::total_cmp);
    let median = sorted[sorted.len() / 2];
    let mut diffs: Vec<f64> = y.windows(2).map(|w| (w[1] - w[0]).abs()).collect();
    diffs.sort_by(f64::total_cmp);
    let noise = 1.4826 * diffs[diffs.len() / 2] / core::f64::consts::SQRT_2;
    let prominence = ymax - median;
    if !(prominence > 1e-12 * ymax.abs().max(1e-300)) || prominence <= 5.0 * noise {
        return Err(PurcellError::NoPeak);
    }

    // Half-maximum crossings for the starting width.
    let half = median + 0.5 * prominence;
    let mut a = imax;
    while a > 0 && y[a] > half {
        a -= 1;
    }
    let mut b = imax;
    while b + 1 < y.len() && y[b] > half {
        b += 1;
    }
    let w0 = (lam[b] - lam[a]).abs().max((lam[1] - lam[0]).abs());
    let out = fit::levenberg_marquardt(
        [median, prominence, lam[imax], w0],
        lam.len(),
        |p, r, jac| {
            let (bg, amp, c, w) = (p[0], p[1], p[2], p[3]);
            for i in 0..lam.len() {
                let x = 2.0 * (lam[i] - c) / w;
                let l = 1.0 / (1.0 + x * x);
                r[i] = bg + amp * l - y[i];
                let dl_dx = -2.0 * x * l * l;
                jac[i] = [1.0, l, amp * dl_dx * (-2.0 / w), amp * dl_dx * (-x / w)];
            }
        },
        500,
    )
    .ok_or(PurcellError::FitDiverged("non-finite residuals"))?;
    let [_, amp, c, w] = out.params;
    let w = w.abs();
    let (lo, hi) = (lam[0].min(lam[lam.len() - 1]), lam[0].max(lam[lam.len() - 1]));
    if !(amp > 0.0) || !(w > 0.0) || !(c > lo && c < hi) {
        return Err(PurcellError::FitDiverged("peak fit left the sampled range"));
    }
    CavityMode::new(c, c / w)
}
