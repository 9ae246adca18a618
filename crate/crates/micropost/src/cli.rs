//! Command line front end.

use std::ffi::OsString;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand};

use crate::config::{CorrelatorKind, ExperimentConfig, PresetFile, MAX_SEED};
use crate::error::Error;
use crate::io::{self, KeyValues};
use crate::report::{self, ReproduceOptions, DEFAULT_REPRODUCE_SEED, FAST_PULSES};
use crate::sim;

#[derive(Debug, Parser)]
#[command(name = "micropost", version, about = "Micropost cavity and single-photon source simulator")]
pub struct Cli {
    /// Preset file; the built-in presets when omitted.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Preset to run; each command has its own default.
    #[arg(long, global = true)]
    pub preset: Option<String>,
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Output directory; the preset's `output_dir` when omitted.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// Pulses per Monte Carlo run.
    #[arg(long, global = true)]
    pub pulses: Option<u64>,
    /// 10⁵ pulses per run and widened tolerances.
    #[arg(long, global = true)]
    pub fast: bool,
    /// Also run the FDTD solver and compare.
    #[arg(long = "cross-check", global = true)]
    pub cross_check: bool,
    #[arg(long, global = true, value_enum)]
    pub correlator: Option<CorrelatorKind>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Reflectance spectrum and resonance of the layer stack.
    Cavity,
    /// Lifetime at each detuning and the fitted decay-rate model.
    LifetimeSweep {
        /// Comma-separated detunings in nm, replacing the preset's list.
        #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
        detunings: Option<Vec<f64>>,
    },
    /// Correlation histogram and g²(0) report.
    Hbt {
        /// Also write the emission events and clicks in binary framing.
        #[arg(long)]
        write_events: bool,
    },
    /// Runs every stage and checks the headline numbers.
    Reproduce {
        #[arg(long)]
        no_plots: bool,
    },
    /// Finds the two-photon probability giving a target g²(0).
    Calibrate {
        #[arg(long)]
        target: Option<f64>,
        #[arg(long)]
        tolerance: Option<f64>,
    },
    /// Analyzes a histogram CSV.
    Analyze { input: PathBuf },
    /// Prints a resolved preset as a standalone preset file.
    ShowConfig,
}

impl Command {
    fn default_preset(&self) -> &'static str {
        match self {
            Command::Cavity => "paper_stack",
            _ => "nominal_dot",
        }
    }
}

fn load_presets(cli: &Cli) -> Result<PresetFile, Error> {
    Ok(match &cli.config {
        Some(p) => PresetFile::load(p)?,
        None => PresetFile::builtin(),
    })
}

/// Resolves a preset and applies the command-line overrides.
fn resolve(cli: &Cli, presets: &PresetFile, name: &str) -> Result<ExperimentConfig, Error> {
    let mut cfg = presets.resolve(name)?;
    if let Some(seed) = cli.seed {
        if seed > MAX_SEED {
            return Err(Error::Validation(format!("--seed must be at most {MAX_SEED}")));
        }
        cfg.seed = Some(seed);
    }
    let pulses = cli.pulses.or(cli.fast.then_some(FAST_PULSES));
    if let Some(n) = pulses {
        if n == 0 {
            return Err(Error::Validation("--pulses must be positive".into()));
        }
        cfg.train.n_pulses = n;
        cfg.sweep.pulses_per_point = n;
        cfg.calibration.pulses = n;
    }
    if let Some(c) = cli.correlator {
        cfg.histogram.correlator = c;
    }
    Ok(cfg)
}

fn require_seed(cfg: &ExperimentConfig) -> Result<u64, Error> {
    cfg.seed.ok_or_else(|| Error::Validation("a seed is required: set `seed` in the preset or pass --seed".into()))
}

fn out_dir(cli: &Cli, cfg: &ExperimentConfig) -> Result<PathBuf, Error> {
    let dir = cli.out.clone().unwrap_or_else(|| PathBuf::from(&cfg.output_dir));
    std::fs::create_dir_all(&dir)?;
    Ok(dir)
}

fn create(dir: &Path, name: &str) -> Result<BufWriter<File>, Error> {
    Ok(BufWriter::new(File::create(dir.join(name))?))
}

/// Writes the resolved config next to the outputs so they can be re-analyzed.
fn write_resolved(dir: &Path, name: &str, cfg: &ExperimentConfig) -> Result<(), Error> {
    std::fs::write(dir.join("config.toml"), cfg.to_preset_file(name))?;
    Ok(())
}

/// Parses arguments, runs the command and returns the process exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    match run(&cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

pub fn run(cli: &Cli) -> Result<(), Error> {
    let presets = load_presets(cli)?;
    let name = cli.preset.clone().unwrap_or_else(|| cli.command.default_preset().to_string());
    match &cli.command {
        Command::Cavity => cmd_cavity(cli, &resolve(cli, &presets, &name)?, &name),
        Command::LifetimeSweep { detunings } => {
            let mut cfg = resolve(cli, &presets, &name)?;
            if let Some(d) = detunings {
                cfg.sweep.detunings_nm = d.clone();
                cfg.sweep.temperatures_k = None;
            }
            cmd_lifetime_sweep(cli, &cfg, &name)
        }
        Command::Hbt { write_events } => cmd_hbt(cli, &resolve(cli, &presets, &name)?, &name, *write_events),
        Command::Calibrate { target, tolerance } => {
            let mut cfg = resolve(cli, &presets, &name)?;
            if let Some(t) = target {
                cfg.calibration.target_g2 = *t;
            }
            if let Some(t) = tolerance {
                cfg.calibration.tolerance = *t;
            }
            cmd_calibrate(cli, &cfg, &name)
        }
        Command::Analyze { input } => cmd_analyze(cli, &resolve(cli, &presets, &name)?, input),
        Command::ShowConfig => {
            print!("{}", resolve(cli, &presets, &name)?.to_preset_file(&name));
            Ok(())
        }
        Command::Reproduce { no_plots } => {
            let cavity = resolve(cli, &presets, "paper_stack")?;
            let dot = resolve(cli, &presets, "nominal_dot")?;
            let seed = cli.seed.unwrap_or(DEFAULT_REPRODUCE_SEED);
            if seed > MAX_SEED {
                return Err(Error::Validation(format!("--seed must be at most {MAX_SEED}")));
            }
            let dir = out_dir(cli, &dot)?;
            let opts = ReproduceOptions {
                seed,
                fast: cli.fast,
                cross_check: cli.cross_check,
                pulses: cli.pulses,
                out_dir: &dir,
                plots: !no_plots,
            };
            let report = report::reproduce(&cavity, &dot, &opts)?;
            print!("{}", report.to_text());
            if report.passed() {
                Ok(())
            } else {
                let failed: Vec<&str> = report.checks.iter().filter(|c| !c.pass()).map(|c| c.name).collect();
                Err(Error::Acceptance(failed.join(", ")))
            }
        }
    }
}

fn cmd_cavity(cli: &Cli, cfg: &ExperimentConfig, name: &str) -> Result<(), Error> {
    let run = sim::run_cavity(cfg, cli.cross_check).map_err(Error::stage("cavity"))?;
    let dir = out_dir(cli, cfg)?;
    let config_hash = cfg.hash();
    let hash = Some(config_hash.as_str());
    write_resolved(&dir, name, cfg)?;
    io::write_csv(create(&dir, "spectrum.csv")?, hash, &io::SPECTRUM_HEADER, run.spectrum.iter())?;

    let r = &run.resonance;
    let mut kv = KeyValues::default();
    kv.push("preset", name)
        .push("layers", run.stack.layers().len())
        .push("lambda_c_nm", r.lambda_c_nm)
        .push("fwhm_nm", r.fwhm_nm)
        .push("q_tmm", r.q_factor)
        .push("stopband_min_nm", r.stopband_nm.0)
        .push("stopband_max_nm", r.stopband_nm.1)
        .push("dip_reflectance", r.dip_reflectance);
    if let Some(x) = &run.cross_check {
        kv.push("q_fdtd", x.q_fdtd)
            .push("q_relative_difference", (x.q_fdtd - r.q_factor).abs() / r.q_factor)
            .push("fdtd_stopband_rms", x.stopband_rms);
        let rows = x.fdtd.iter().zip(&x.tmm_snapped).map(|((l, a), b)| (l, a, *b));
        io::write_csv(
            create(&dir, "fdtd_spectrum.csv")?,
            hash,
            &["wavelength_nm", "reflectance", "reflectance_tmm"],
            rows,
        )?;
        let rec = &x.ringdown;
        let rows = rec
            .probe_times_ns
            .iter()
            .zip(&rec.field_samples)
            .step_by(cfg.fdtd.ringdown_decimation)
            .map(|(&t, &e)| (t, e));
        io::write_csv(create(&dir, "ringdown.csv")?, hash, &io::RINGDOWN_HEADER, rows)?;
    }
    kv.push("config_hash", &config_hash);
    std::fs::write(dir.join("resonance.txt"), kv.to_string())?;
    print!("{kv}");
    Ok(())
}

fn cmd_lifetime_sweep(cli: &Cli, cfg: &ExperimentConfig, name: &str) -> Result<(), Error> {
    let seed = require_seed(cfg)?;
    let run = sim::lifetime_sweep(cfg, seed, cfg.sweep.pulses_per_point).map_err(Error::stage("lifetime-sweep"))?;
    let dir = out_dir(cli, cfg)?;
    let hash = cfg.hash();
    write_resolved(&dir, name, cfg)?;
    let rows = run.detunings_nm.iter().zip(&run.curve.points).map(|(&d, p)| (d, p.1));
    io::write_csv(create(&dir, "decay_curve.csv")?, Some(&hash), &io::DECAY_HEADER, rows)?;

    let fit = &run.curve.fit;
    let m = &fit.model;
    let mut kv = KeyValues::default();
    kv.push("preset", name)
        .push("seed", seed)
        .push("points", run.detunings_nm.len())
        .push("pulses_per_point", cfg.sweep.pulses_per_point)
        .push("gamma_max_per_ns", m.gamma_max)
        .push("gamma_min_per_ns", m.gamma_min)
        .push("purcell_factor", m.gamma_max / m.gamma_min)
        .push("linewidth_nm", fit.linewidth_nm())
        .push("q_factor", m.mode.q_factor)
        .push("lambda_c_nm", m.mode.lambda_c_nm)
        .push("gamma_min_err", fit.std_errors[0])
        .push("gamma_max_err", fit.std_errors[1])
        .push("linewidth_err", fit.std_errors[2])
        .push("residual_norm", fit.residual_norm)
        .push("config_hash", &hash);
    std::fs::write(dir.join("decay_fit.txt"), kv.to_string())?;
    print!("{kv}");
    Ok(())
}

fn cmd_hbt(cli: &Cli, cfg: &ExperimentConfig, name: &str, write_events: bool) -> Result<(), Error> {
    let seed = require_seed(cfg)?;
    let n = cfg.train.n_pulses;
    let run = sim::run_hbt(cfg, seed, n).map_err(Error::stage("hbt"))?;
    let dir = out_dir(cli, cfg)?;
    let hash = cfg.hash();
    write_resolved(&dir, name, cfg)?;
    io::write_histogram(create(&dir, "histogram.csv")?, Some(&hash), &run.histogram)?;
    io::write_g2_csv(create(&dir, "g2_report.csv")?, Some(&hash), &run.reports)?;
    if write_events {
        let events = sim::run_emission(&sim::source_config(cfg, seed, n, None));
        io::write_events_bin(create(&dir, "events.bin")?, &events)?;
        io::write_clicks_bin(create(&dir, "clicks.bin")?, &run.clicks)?;
    }
    let text = g2_text(name, Some(seed), &hash, &run.reports, Some((n, &run.clicks)));
    std::fs::write(dir.join("g2_report.txt"), &text)?;
    print!("{text}");
    Ok(())
}

fn g2_text(
    name: &str,
    seed: Option<u64>,
    hash: &str,
    reports: &[micropost_core::analysis::G2Report],
    run: Option<(u64, &micropost_core::hbt::Clicks)>,
) -> String {
    let mut head = KeyValues::default();
    head.push("preset", name);
    if let Some(s) = seed {
        head.push("seed", s);
    }
    if let Some((n, clicks)) = run {
        head.push("pulses", n).push("clicks_det1", clicks.det1.len()).push("clicks_det2", clicks.det2.len());
    }
    head.push("config_hash", hash);
    let mut out = head.to_string();
    for r in reports {
        out.push_str(&format!("\n[window {} ns]\n", r.window_ns));
        out.push_str(&io::g2_key_values(r).to_string());
    }
    out
}

fn cmd_calibrate(cli: &Cli, cfg: &ExperimentConfig, name: &str) -> Result<(), Error> {
    let seed = require_seed(cfg)?;
    let c = &cfg.calibration;
    let cal = sim::calibrate_p2(cfg, seed, c.pulses, c.target_g2, c.tolerance, c.max_iterations)
        .map_err(Error::stage("calibrate"))?;
    let dir = out_dir(cli, cfg)?;
    let hash = cfg.hash();
    let mut kv = KeyValues::default();
    kv.push("preset", name)
        .push("seed", seed)
        .push("pulses", c.pulses)
        .push("target_g2", c.target_g2)
        .push("tolerance", c.tolerance)
        .push("p1", cfg.emission.p1)
        .push("p2", cal.p2)
        .push("g2_zero", cal.g2)
        .push("g2_zero_err", cal.g2_err)
        .push("evaluations", cal.steps.len());
    for (i, (p2, g2)) in cal.steps.iter().enumerate() {
        kv.push(format!("step{i}"), format!("p2={p2} g2={g2}"));
    }
    kv.push("config_hash", &hash);
    std::fs::write(dir.join("calibration.txt"), kv.to_string())?;
    print!("{kv}");
    Ok(())
}

fn cmd_analyze(cli: &Cli, cfg: &ExperimentConfig, input: &Path) -> Result<(), Error> {
    let (file_hash, hist) =
        io::read_histogram(File::open(input)?).map_err(|e| Error::Validation(format!("{}: {e}", input.display())))?;
    let hash = cfg.hash();
    if let Some(h) = &file_hash {
        if *h != hash {
            return Err(Error::Validation(format!(
                "{}: config hash {h} does not match the current config ({hash})",
                input.display()
            )));
        }
    }
    let reports = sim::analyze_histogram(cfg, &hist).map_err(Error::stage("analyze"))?;
    let text = g2_text("analyze", None, &hash, &reports, None);
    if let Some(dir) = &cli.out {
        std::fs::create_dir_all(dir)?;
        std::fs::write(dir.join("g2_report.txt"), &text)?;
        io::write_g2_csv(create(dir, "g2_report.csv")?, Some(&hash), &reports)?;
    }
    std::io::stdout().lock().write_all(text.as_bytes())?;
    Ok(())
}
