//! The one-shot reproduction pipeline and its report.

use std::fs::File;
use std::io::BufWriter;
use std::path::Path;
use std::time::Instant;

use micropost_core::analysis::G2Report;
use micropost_core::purcell::{decay_rate, purcell_factor};
use micropost_core::rng::derive_seed;
use sha2::{Digest, Sha256};

use crate::config::ExperimentConfig;
use crate::error::Error;
use crate::io::{self, KeyValues};
use crate::sim::{self, CavityRun, HbtRun, SweepRun};
use crate::svg::{Plot, Series, Style};

/// Seed used by `reproduce` when none is given.
pub const DEFAULT_REPRODUCE_SEED: u64 = 2_718_281;

/// Pulse count of every Monte Carlo stage under `--fast`.
pub const FAST_PULSES: u64 = 100_000;

#[derive(Debug, Clone, PartialEq)]
pub struct Check {
    pub name: &'static str,
    pub value: f64,
    pub lo: f64,
    pub hi: f64,
}

impl Check {
    fn new(name: &'static str, value: f64, lo: f64, hi: f64) -> Self {
        Self { name, value, lo, hi }
    }

    fn around(name: &'static str, value: f64, target: f64, rel: f64) -> Self {
        Self::new(name, value, target * (1.0 - rel), target * (1.0 + rel))
    }

    pub fn pass(&self) -> bool {
        self.value >= self.lo && self.value <= self.hi
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReproductionReport {
    pub seed: u64,
    pub config_hash: String,
    pub fast: bool,
    pub planar_q: f64,
    pub resonance_nm: f64,
    /// Stopband RMS deviation and ringdown Q, when the FDTD cross-check ran.
    pub fdtd: Option<(f64, f64)>,
    pub purcell_factor: f64,
    pub fitted_q: f64,
    pub tau_on_ns: f64,
    pub tau_off_ns: f64,
    pub p2: f64,
    pub g2: Vec<G2Report>,
    pub checks: Vec<Check>,
    /// Wall-clock seconds per stage.
    pub timings: Vec<(&'static str, f64)>,
}

fn f6(x: f64) -> String {
    format!("{x:.6}")
}

impl ReproductionReport {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(Check::pass)
    }

    /// Everything except timings; identical for identical inputs.
    pub fn body(&self) -> String {
        let mut kv = KeyValues::default();
        kv.push("seed", self.seed)
            .push("config_hash", &self.config_hash)
            .push("mode", if self.fast { "fast" } else { "full" })
            .push("planar_q", f6(self.planar_q))
            .push("resonance_nm", f6(self.resonance_nm));
        if let Some((rms, q)) = self.fdtd {
            kv.push("fdtd_stopband_rms", f6(rms)).push("fdtd_q", f6(q));
        }
        kv.push("purcell_factor", f6(self.purcell_factor))
            .push("fitted_q", f6(self.fitted_q))
            .push("lifetime_on_ns", f6(self.tau_on_ns))
            .push("lifetime_off_ns", f6(self.tau_off_ns))
            .push("lifetime_ratio", f6(self.tau_off_ns / self.tau_on_ns))
            .push("p2", f6(self.p2));
        for r in &self.g2 {
            let w = r.window_ns;
            kv.push(format!("g2_zero_{w}ns"), f6(r.g2_zero))
                .push(format!("g2_zero_{w}ns_err"), f6(r.g2_zero_err))
                .push(format!("g_nearest_{w}ns"), f6(r.g_nearest))
                .push(format!("g_nearest_{w}ns_err"), f6(r.g_nearest_err));
        }
        if let Some(r) = self.g2.first() {
            kv.push("envelope_beta", f6(r.envelope.beta))
                .push("envelope_tau_b_ns", f6(r.envelope.tau_b_ns))
                .push("envelope_a_inf", f6(r.envelope.a_inf));
        }
        for c in &self.checks {
            let flag = if c.pass() { "PASS" } else { "FAIL" };
            kv.push(format!("check.{}", c.name), format!("{flag} {} in [{}, {}]", f6(c.value), f6(c.lo), f6(c.hi)));
        }
        let mut out = String::from(
            "# micropost reproduction report\n\
             # lambda_c, gamma_min and the blinking rates are nominal values; p2 is calibrated\n",
        );
        out.push_str(&kv.to_string());
        out
    }

    pub fn timings_text(&self) -> String {
        let mut kv = KeyValues::default();
        for (stage, secs) in &self.timings {
            kv.push(format!("runtime_s.{stage}"), format!("{secs:.3}"));
        }
        format!("# timings\n{kv}")
    }

    pub fn to_text(&self) -> String {
        format!("{}{}", self.body(), self.timings_text())
    }

    /// Header and one data row.
    pub fn csv(&self) -> String {
        let mut names = vec![
            "seed",
            "planar_q",
            "resonance_nm",
            "purcell_factor",
            "fitted_q",
            "lifetime_on_ns",
            "lifetime_off_ns",
            "p2",
        ];
        let mut values = vec![
            self.seed.to_string(),
            f6(self.planar_q),
            f6(self.resonance_nm),
            f6(self.purcell_factor),
            f6(self.fitted_q),
            f6(self.tau_on_ns),
            f6(self.tau_off_ns),
            f6(self.p2),
        ];
        if let Some(r) = self.g2.first() {
            names.extend(["g2_zero", "g2_zero_err", "g_nearest", "g_nearest_err", "beta", "tau_b_ns"]);
            values.extend(
                [r.g2_zero, r.g2_zero_err, r.g_nearest, r.g_nearest_err, r.envelope.beta, r.envelope.tau_b_ns].map(f6),
            );
        }
        names.push("passed");
        values.push(self.passed().to_string());
        format!("{}\n{}\n", names.join(","), values.join(","))
    }
}

/// Tolerances of the report's checks.
struct Tolerances {
    purcell: f64,
    q: f64,
    tau: f64,
    ratio: f64,
    g2: (f64, f64),
}

const FULL: Tolerances = Tolerances { purcell: 0.10, q: 0.15, tau: 0.02, ratio: 0.05, g2: (0.015, 0.025) };
const FAST: Tolerances = Tolerances { purcell: 0.30, q: 0.40, tau: 0.10, ratio: 0.15, g2: (0.0, 0.07) };

pub struct ReproduceOptions<'a> {
    pub seed: u64,
    pub fast: bool,
    pub cross_check: bool,
    /// Pulse count for every Monte Carlo stage, overriding the presets.
    pub pulses: Option<u64>,
    pub out_dir: &'a Path,
    pub plots: bool,
}

fn timed<T>(timings: &mut Vec<(&'static str, f64)>, stage: &'static str, f: impl FnOnce() -> T) -> T {
    let t = Instant::now();
    let out = f();
    timings.push((stage, t.elapsed().as_secs_f64()));
    out
}

fn create(dir: &Path, name: &str) -> Result<BufWriter<File>, Error> {
    Ok(BufWriter::new(File::create(dir.join(name))?))
}

/// Runs every stage on the `paper_stack` and `nominal_dot` presets.
pub fn reproduce(
    cavity_cfg: &ExperimentConfig,
    dot_cfg: &ExperimentConfig,
    opts: &ReproduceOptions,
) -> Result<ReproductionReport, Error> {
    let tol = if opts.fast { FAST } else { FULL };
    let pulses = |n: u64| opts.pulses.unwrap_or(if opts.fast { FAST_PULSES } else { n });
    let mut hasher = Sha256::new();
    for (name, c) in [("paper_stack", cavity_cfg), ("nominal_dot", dot_cfg)] {
        hasher.update(name.as_bytes());
        hasher.update(c.to_toml().as_bytes());
    }
    let config_hash: String = hasher.finalize().iter().map(|b| format!("{b:02x}")).collect();
    let hash = Some(config_hash.as_str());
    let mut timings = Vec::new();
    let dir = opts.out_dir;
    std::fs::create_dir_all(dir)?;

    let cavity: CavityRun = timed(&mut timings, "cavity", || sim::run_cavity(cavity_cfg, opts.cross_check))
        .map_err(Error::stage("cavity"))?;
    io::write_csv(create(dir, "spectrum.csv")?, hash, &io::SPECTRUM_HEADER, cavity.spectrum.iter())?;

    let sweep: SweepRun = timed(&mut timings, "lifetime_sweep", || {
        sim::lifetime_sweep(dot_cfg, derive_seed(opts.seed, 1), pulses(dot_cfg.sweep.pulses_per_point))
    })
    .map_err(Error::stage("lifetime-sweep"))?;
    io::write_csv(create(dir, "decay_curve.csv")?, hash, &io::DECAY_HEADER, sweep.curve.points.iter().copied())?;

    let (on, off) = timed(&mut timings, "lifetime_pair", || {
        sim::lifetime_pair(dot_cfg, derive_seed(opts.seed, 2), pulses(dot_cfg.sweep.pulses_per_point))
    })
    .map_err(Error::stage("lifetime-pair"))?;

    let hbt: HbtRun =
        timed(&mut timings, "hbt", || sim::run_hbt(dot_cfg, derive_seed(opts.seed, 3), pulses(dot_cfg.train.n_pulses)))
            .map_err(Error::stage("hbt"))?;
    io::write_histogram(create(dir, "histogram.csv")?, hash, &hbt.histogram)?;
    io::write_g2_csv(create(dir, "g2_report.csv")?, hash, &hbt.reports)?;

    let res = &cavity.resonance;
    let fit = &sweep.curve.fit;
    let g = &hbt.reports[0];
    let mut checks = vec![
        Check::around("planar_q", res.q_factor, 4000.0, 0.25),
        Check::new("resonance_nm", res.lambda_c_nm, 940.0, 980.0),
    ];
    let fdtd = cavity.cross_check.as_ref().map(|x| (x.stopband_rms, x.q_fdtd));
    if let Some((rms, q)) = fdtd {
        checks.push(Check::new("fdtd_stopband_rms", rms, 0.0, 0.01));
        checks.push(Check::around("fdtd_q", q, res.q_factor, 0.10));
    }
    checks.extend([
        Check::around("purcell_factor", purcell_factor(&fit.model), 5.0, tol.purcell),
        Check::around("fitted_q", fit.model.mode.q_factor, 1270.0, tol.q),
        Check::around("lifetime_on_ns", on.tau_ns, 0.2, tol.tau),
        Check::around("lifetime_ratio", off.tau_ns / on.tau_ns, 5.0, tol.ratio),
        Check::new("g2_zero", g.g2_zero, tol.g2.0, tol.g2.1),
        Check::new(
            "g2_minus_g",
            g.g2_zero - g.g_nearest,
            if opts.fast { 0.0 } else { f64::MIN_POSITIVE },
            f64::INFINITY,
        ),
    ]);

    if opts.plots {
        write_plots(dir, &sweep, &hbt)?;
    }

    let report = ReproductionReport {
        seed: opts.seed,
        config_hash,
        fast: opts.fast,
        planar_q: res.q_factor,
        resonance_nm: res.lambda_c_nm,
        fdtd,
        purcell_factor: purcell_factor(&fit.model),
        fitted_q: fit.model.mode.q_factor,
        tau_on_ns: on.tau_ns,
        tau_off_ns: off.tau_ns,
        p2: dot_cfg.emission.p2,
        g2: hbt.reports.clone(),
        checks,
        timings,
    };
    std::fs::write(dir.join("report.txt"), report.to_text())?;
    std::fs::write(dir.join("report.csv"), report.csv())?;
    Ok(report)
}

fn write_plots(dir: &Path, sweep: &SweepRun, hbt: &HbtRun) -> Result<(), Error> {
    let fit = &sweep.curve.fit.model;
    let lc = fit.mode.lambda_c_nm;
    let span = sweep.curve.points.iter().map(|p| p.0).fold(0.0, f64::max) * 1.1;
    let curve = (0..=200).map(|i| {
        let d = -span + 2.0 * span * i as f64 / 200.0;
        (d, decay_rate(lc + d, fit))
    });
    let points = sweep.detunings_nm.iter().zip(&sweep.curve.points).map(|(&d, p)| (d, p.1)).collect();
    let decay = Plot {
        title: "Decay rate vs detuning".into(),
        x_label: "detuning (nm)".into(),
        y_label: "decay rate (1/ns)".into(),
        series: vec![
            Series { points: curve.collect(), style: Style::Line, color: "#1f77b4" },
            Series { points, style: Style::Markers, color: "#d62728" },
        ],
    };
    std::fs::write(dir.join("decay_rate.svg"), decay.render())?;

    // Summed into 0.5 ns bins to keep the file small.
    let h = &hbt.histogram;
    let group = ((0.5 / h.bin_width_ns).round() as usize).max(1);
    let pts = h
        .counts
        .chunks(group)
        .enumerate()
        .map(|(i, c)| {
            let centre = h.bin_start(i * group) + 0.5 * c.len() as f64 * h.bin_width_ns;
            (centre, c.iter().sum::<u64>() as f64)
        })
        .collect();
    let corr = Plot {
        title: format!("Coincidences ({} pairs)", h.counts.iter().sum::<u64>()),
        x_label: "delay (ns)".into(),
        y_label: "counts per 0.5 ns".into(),
        series: vec![Series { points: pts, style: Style::Line, color: "#1f77b4" }],
    };
    std::fs::write(dir.join("correlation.svg"), corr.render())?;
    Ok(())
}
