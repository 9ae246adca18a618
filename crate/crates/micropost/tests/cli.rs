use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use micropost::io::{self, KeyValues};

fn micropost(args: &[&str]) -> Output {
    micropost_with_env(args, &[])
}

fn micropost_with_env(args: &[&str], env: &[(&str, &str)]) -> Output {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_micropost"));
    cmd.args(args);
    for (k, v) in env {
        cmd.env(k, v);
    }
    cmd.output().expect("binary runs")
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn write_config(dir: &Path, text: &str) -> String {
    let p = dir.join("presets.toml");
    fs::write(&p, text).unwrap();
    p.to_str().unwrap().to_string()
}

fn key_values(path: &Path) -> KeyValues {
    KeyValues::parse(&fs::read_to_string(path).unwrap())
}

fn num(kv: &KeyValues, key: &str) -> f64 {
    kv.get(key).unwrap_or_else(|| panic!("missing {key}")).parse().unwrap()
}

#[test]
fn help_and_bad_flags() {
    assert_eq!(micropost(&["--help"]).status.code(), Some(0));
    assert_eq!(micropost(&["cavity", "--no-such-flag"]).status.code(), Some(2));
    assert_eq!(micropost(&[]).status.code(), Some(2));
}

#[test]
fn cavity_writes_spectrum_and_resonance() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().to_str().unwrap();
    let o = micropost(&["cavity", "--out", out]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let kv = key_values(&dir.path().join("resonance.txt"));
    assert_eq!(kv.get("layers"), Some("85"));
    let q = num(&kv, "q_tmm");
    assert!((3000.0..=5000.0).contains(&q), "{q}");
    let spectrum: io::TwoColumns<f64, f64> =
        io::read_csv(fs::File::open(dir.path().join("spectrum.csv")).unwrap()).unwrap();
    assert_eq!(spectrum.header, ["wavelength_nm", "reflectance"]);
    assert_eq!(spectrum.rows.len(), 20_001);
    assert_eq!(spectrum.hash.as_deref(), kv.get("config_hash"));
    assert!(dir.path().join("config.toml").exists());
}

#[test]
fn empty_stack_has_no_stopband() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "[presets.empty.stack]\nlayers = []\n");
    let o = micropost(&["--config", &cfg, "--preset", "empty", "--out", dir.path().to_str().unwrap(), "cavity"]);
    assert_eq!(o.status.code(), Some(3));
    assert!(stderr(&o).contains("no stopband"), "{}", stderr(&o));
}

#[test]
fn config_errors_carry_line_numbers() {
    let dir = tempfile::tempdir().unwrap();
    let cases = [
        // Window wider than the period.
        ("[presets.a]\nseed = 1\n\n[presets.a.analysis]\nwindows_ns = [20.0]\n", ":5"),
        // Unknown key.
        ("[presets.a]\nseed = 1\ncolour = \"red\"\n", ":3"),
        // Syntax error.
        ("[presets.a]\nseed = = 1\n", ":2"),
        // Refractive index below one.
        ("[presets.a]\n\n[presets.a.stack]\nn_alas = 0.5\n", ":4"),
    ];
    for (text, line) in cases {
        let cfg = write_config(dir.path(), text);
        let o = micropost(&["--config", &cfg, "--preset", "a", "show-config"]);
        assert_eq!(o.status.code(), Some(2), "{text}");
        let err = stderr(&o);
        assert!(err.contains(&format!("presets.toml{line}")), "{text}\n{err}");
    }
}

#[test]
fn preset_references_are_checked() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "[presets.a]\nextends = \"nowhere\"\n");
    let o = micropost(&["--config", &cfg, "--preset", "a", "show-config"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("nowhere"), "{}", stderr(&o));

    let cfg = write_config(dir.path(), "[presets.a]\nextends = \"b\"\n\n[presets.b]\nextends = \"a\"\n");
    let o = micropost(&["--config", &cfg, "--preset", "a", "show-config"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("cycle"), "{}", stderr(&o));

    let o = micropost(&["--preset", "missing", "show-config"]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn monte_carlo_needs_a_seed() {
    let dir = tempfile::tempdir().unwrap();
    let o = micropost(&["hbt", "--pulses", "1000", "--out", dir.path().to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("seed"));
    let o = micropost(&["hbt", "--seed", "18446744073709551615", "--pulses", "1000"]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn fixed_seed_gives_identical_bytes_on_any_thread_count() {
    let dir = tempfile::tempdir().unwrap();
    let run = |sub: &str, threads: &str| {
        let out = dir.path().join(format!("{sub}-{threads}"));
        let o = micropost_with_env(
            &[sub, "--seed", "7", "--pulses", "200000", "--out", out.to_str().unwrap()],
            &[("RAYON_NUM_THREADS", threads)],
        );
        assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
        out
    };
    for (sub, file) in [("hbt", "histogram.csv"), ("lifetime-sweep", "decay_curve.csv")] {
        let a = fs::read(run(sub, "1").join(file)).unwrap();
        let b = fs::read(run(sub, "4").join(file)).unwrap();
        assert_eq!(a, b, "{file}");
    }
}

#[test]
fn one_point_sweep_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().to_str().unwrap();
    let o = micropost(&["lifetime-sweep", "--seed", "1", "--pulses", "1000", "--detunings", "0.5", "--out", out]);
    assert_eq!(o.status.code(), Some(3));
    assert!(stderr(&o).contains("at least 4 detunings"), "{}", stderr(&o));
}

#[test]
fn analyze_checks_the_config_hash() {
    let dir = tempfile::tempdir().unwrap();
    let run = dir.path().join("run");
    let o = micropost(&["hbt", "--seed", "3", "--pulses", "300000", "--out", run.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let hist = run.join("histogram.csv");
    let cfg = run.join("config.toml");

    // Same resolved config: the stored report is reproduced.
    let again = dir.path().join("again");
    let o = micropost(&[
        "--config",
        cfg.to_str().unwrap(),
        "--out",
        again.to_str().unwrap(),
        "analyze",
        hist.to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    // Bin widths rebuilt from the centres may differ in the last bit.
    let rows = |p: &Path| -> Vec<Vec<f64>> {
        let text = fs::read_to_string(p).unwrap();
        text.lines().skip(2).map(|l| l.split(',').map(|x| x.parse().unwrap()).collect()).collect()
    };
    let (a, b) = (rows(&run.join("g2_report.csv")), rows(&again.join("g2_report.csv")));
    assert_eq!(a.len(), 2);
    for (x, y) in a.iter().flatten().zip(b.iter().flatten()) {
        assert!((x - y).abs() <= 1e-9 * x.abs().max(1.0), "{x} vs {y}");
    }

    // Different seed, different config.
    let o = micropost(&["--config", cfg.to_str().unwrap(), "--seed", "4", "analyze", hist.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("does not match"), "{}", stderr(&o));
}

#[test]
fn event_and_click_streams_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path();
    let o = micropost(&["hbt", "--seed", "5", "--pulses", "50000", "--write-events", "--out", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let kv = key_values(&out.join("g2_report.txt"));
    let clicks = io::read_clicks_bin(fs::File::open(out.join("clicks.bin")).unwrap()).unwrap();
    assert_eq!(clicks.det1.len().to_string(), kv.get("clicks_det1").unwrap());
    assert_eq!(clicks.det2.len().to_string(), kv.get("clicks_det2").unwrap());
    let events = io::read_events_bin(fs::File::open(out.join("events.bin")).unwrap()).unwrap();
    assert!(events.windows(2).all(|w| w[0].pulse_index < w[1].pulse_index));
    assert!(events.iter().all(|e| e.pulse_index < 50_000 && !e.times.is_empty()));
}

#[test]
fn fast_reproduction_passes_and_is_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    let body = |name: &str| {
        let out = dir.path().join(name);
        let o = micropost(&["reproduce", "--fast", "--out", out.to_str().unwrap()]);
        assert_eq!(o.status.code(), Some(0), "{}\n{}", stdout(&o), stderr(&o));
        let text = fs::read_to_string(out.join("report.txt")).unwrap();
        assert!(out.join("decay_rate.svg").exists() && out.join("correlation.svg").exists());
        text.split("# timings").next().unwrap().to_string()
    };
    let first = body("a");
    assert!(first.contains("check.g2_zero = PASS"), "{first}");
    assert_eq!(first, body("b"));
}

const CLOSED_FORM: &str = "\
[presets.bright]
seed = 11

[presets.bright.emission]
p1 = 0.2

[presets.bright.blinking]
enabled = false

[presets.bright.detector]
efficiency = 1.0
dead_time_ns = 0.0

[presets.bright.histogram]
correlator = \"all_pairs\"
";

#[test]
fn calibration_matches_the_closed_form() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), CLOSED_FORM);
    let out = dir.path().join("cal");
    let o = micropost(&[
        "--config",
        &cfg,
        "--preset",
        "bright",
        "--pulses",
        "1000000",
        "--out",
        out.to_str().unwrap(),
        "calibrate",
        "--target",
        "1",
        "--tolerance",
        "0.02",
    ]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let kv = key_values(&out.join("calibration.txt"));
    // 2 p2 / (p1 + 2 p2)² = 1 with p1 = 0.2; the smaller root.
    let p1 = 0.2f64;
    let x = ((1.0 - 2.0 * p1) - (1.0 - 4.0 * p1).sqrt()) / 2.0;
    let expected = x / 2.0;
    let p2 = num(&kv, "p2");
    assert!((p2 - expected).abs() < 0.004, "{p2} vs {expected}");
    assert!((num(&kv, "g2_zero") - 1.0).abs() < 0.02);

    let o = micropost(&[
        "--config",
        &cfg,
        "--preset",
        "bright",
        "--pulses",
        "100000",
        "--out",
        out.to_str().unwrap(),
        "calibrate",
        "--target",
        "0",
    ]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let kv = key_values(&out.join("calibration.txt"));
    assert_eq!(num(&kv, "p2"), 0.0);
    assert_eq!(num(&kv, "g2_zero"), 0.0);
}

#[test]
fn show_config_output_is_a_preset_file() {
    let dir = tempfile::tempdir().unwrap();
    let o = micropost(&["--preset", "poisson_benchmark", "--seed", "9", "show-config"]);
    assert_eq!(o.status.code(), Some(0));
    let cfg = write_config(dir.path(), &stdout(&o));
    let again = micropost(&["--config", &cfg, "--preset", "poisson_benchmark", "show-config"]);
    assert_eq!(stdout(&o), stdout(&again));
}
