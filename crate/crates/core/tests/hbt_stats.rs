use micropost_core::analysis::{fit_lifetime, integrate_range, side_peak_rms, DEFAULT_FIT_START_OFFSET_NS};
use micropost_core::hbt::*;
use micropost_core::source::*;
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use smallvec::smallvec;

const T: f64 = PERIOD_76MHZ_NS;

fn single_photons(n: u64) -> Vec<EmissionEvent> {
    (0..n).map(|i| EmissionEvent { pulse_index: i, times: smallvec![i as f64 * T] }).collect()
}

fn chain(statistics: PhotonStatistics, blinking: BlinkingModel, det: DetectorModel, n: u64, seed: u64) -> ChainConfig {
    ChainConfig {
        source: SourceConfig {
            train: PulseTrain::new(T, n).unwrap(),
            blinking,
            emission: EmissionModel::new(5.0, statistics).unwrap(),
            seed,
        },
        det1: det,
        det2: det,
    }
}

fn all_pairs() -> HistogramSpec {
    HistogramSpec { correlator: Correlator::AllPairs, ..Default::default() }
}

#[test]
fn beamsplitter_is_fair() {
    let n = 1_000_000u64;
    let det = DetectorModel::ideal(0.0);
    let clicks = beamsplit_and_detect(&single_photons(n), &det, &det, n as f64 * T, &mut ChaCha8Rng::seed_from_u64(1));
    assert_eq!(clicks.det1.len() + clicks.det2.len(), n as usize);
    let f = clicks.det1.len() as f64 / n as f64;
    let sigma = (0.25 / n as f64).sqrt();
    assert!((f - 0.5).abs() < 3.0 * sigma, "{f}");
}

fn moments(xs: &[f64]) -> (f64, f64, f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let m = |p: i32| xs.iter().map(|x| (x - mean).powi(p)).sum::<f64>() / n;
    let var = m(2);
    (mean, var, m(3) / var.powf(1.5), m(4) / (var * var))
}

#[test]
fn jitter_is_gaussian() {
    let n = 100_000u64;
    let det = DetectorModel::ideal(0.3);
    let mut raw = Clicks::default();
    route_photons(&single_photons(n), &det, &det, &mut ChaCha8Rng::seed_from_u64(2), &mut raw);
    let residuals: Vec<f64> = raw.det1.iter().chain(&raw.det2).map(|&t| t - (t / T).round() * T).collect();
    assert_eq!(residuals.len(), n as usize);
    let (mean, var, skew, kurt) = moments(&residuals);
    let sigma = det.jitter_sigma_ns();
    assert!(mean.abs() < 3.0 * sigma / (n as f64).sqrt());
    assert!((var.sqrt() / sigma - 1.0).abs() < 0.01);
    assert!(skew.abs() < 0.05, "skew {skew}");
    assert!((kurt - 3.0).abs() < 0.1, "kurtosis {kurt}");
}

#[test]
fn dead_time_is_respected_by_the_chain() {
    let det = DetectorModel { efficiency: 0.5, ..Default::default() };
    let cfg = chain(PhotonStatistics::Truncated { p1: 0.9, p2: 0.05 }, BlinkingModel::always_on(), det, 100_000, 3);
    let clicks = simulate_clicks(&cfg);
    for stream in [&clicks.det1, &clicks.det2] {
        assert!(!stream.is_empty());
        for w in stream.windows(2) {
            assert!(w[1] > w[0] && w[1] - w[0] >= det.dead_time_ns);
        }
    }
}

#[test]
fn block_evaluation_order_is_irrelevant() {
    let det = DetectorModel { efficiency: 0.3, dark_rate_per_ns: 1e-4, ..Default::default() };
    let cfg = chain(
        PhotonStatistics::Truncated { p1: 0.8, p2: 0.01 },
        BlinkingModel::new(0.0288, 0.0096, InitialState::Stationary).unwrap(),
        det,
        3 * BLOCK_PULSES + 77,
        4,
    );
    let states = pulse_states(&cfg.source);
    let mut blocks: Vec<_> = (0..cfg.source.n_blocks()).rev().map(|b| (b, detect_block(&cfg, &states, b))).collect();
    blocks.sort_by_key(|(b, _)| *b);
    let merged = merge_blocks(&cfg, blocks.into_iter().map(|(_, c)| c));
    assert_eq!(merged, simulate_clicks(&cfg));
}

fn sorted_times() -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(0.0f64..2000.0, 0..300).prop_map(|mut v| {
        v.sort_by(f64::total_cmp);
        v.dedup();
        v
    })
}

proptest! {
    #[test]
    fn first_stop_records_at_most_one_count_per_start(a in sorted_times(), b in sorted_times()) {
        let hist = correlate(&a, &b, &HistogramSpec::default()).unwrap();
        prop_assert!(hist.total() <= a.len() as u64);
        let pairs = correlate(&a, &b, &all_pairs()).unwrap();
        prop_assert!(hist.total() <= pairs.total());
    }

    #[test]
    fn all_pairs_counts_every_pair_in_range(a in sorted_times(), b in sorted_times()) {
        let hist = correlate(&a, &b, &all_pairs()).unwrap();
        let upper = hist.upper_edge();
        let brute = a.iter().flat_map(|x| b.iter().map(move |y| y - x)).filter(|&d| d >= -65.0 && d < upper).count();
        prop_assert_eq!(hist.total(), brute as u64);
    }

    #[test]
    fn dead_time_output_is_spaced(a in sorted_times(), dead in 0.0f64..100.0) {
        let kept = apply_dead_time(&a, dead);
        for w in kept.windows(2) {
            prop_assert!(w[1] > w[0] && w[1] - w[0] >= dead);
        }
        prop_assert_eq!(kept.first(), a.first());
    }
}

#[test]
fn ideal_single_photons_leave_the_centre_empty() {
    let det = DetectorModel::default();
    let cfg = chain(
        PhotonStatistics::Truncated { p1: 0.8, p2: 0.0 },
        BlinkingModel::new(0.0288, 0.0096, InitialState::Stationary).unwrap(),
        DetectorModel { efficiency: 0.1, ..det },
        2_000_000,
        5,
    );
    let clicks = simulate_clicks(&cfg);
    for spec in [HistogramSpec::default(), all_pairs()] {
        let hist = correlate(&clicks.det1, &clicks.det2, &spec).unwrap();
        assert!(hist.total() > 0);
        // Period minus a generous peak width.
        let w = T - 3.0;
        assert_eq!(integrate_range(&hist, -w / 2.0, w / 2.0), 0.0);
    }
}

/// Side-peak areas over a full period around each `k`.
fn full_period_areas(hist: &CorrelationHistogram, ks: impl Iterator<Item = i64>) -> Vec<f64> {
    ks.map(|k| integrate_range(hist, k as f64 * T - T / 2.0, k as f64 * T + T / 2.0)).collect()
}

#[test]
fn poisson_side_peaks_are_equal() {
    let cfg = chain(
        PhotonStatistics::Poisson { mean: 0.8 },
        BlinkingModel::always_on(),
        DetectorModel { efficiency: 0.1, dead_time_ns: 0.0, ..Default::default() },
        2_000_000,
        6,
    );
    let clicks = simulate_clicks(&cfg);
    let hist = correlate(&clicks.det1, &clicks.det2, &all_pairs()).unwrap();
    let areas = full_period_areas(&hist, (-4..=4).filter(|&k| k != 0));
    let mean = areas.iter().sum::<f64>() / areas.len() as f64;
    for a in &areas {
        assert!((a - mean).abs() < 3.0 * mean.sqrt(), "{areas:?}");
    }
    let centre = full_period_areas(&hist, 0..1)[0];
    assert!((centre - mean).abs() < 3.0 * mean.sqrt(), "centre {centre} vs {mean}");
}

fn dense_histogram() -> (CorrelationHistogram, f64) {
    let det = DetectorModel::ideal(0.3);
    let cfg = chain(PhotonStatistics::Truncated { p1: 1.0, p2: 0.0 }, BlinkingModel::always_on(), det, 4_000_000, 7);
    let clicks = simulate_clicks(&cfg);
    (correlate(&clicks.det1, &clicks.det2, &all_pairs()).unwrap(), det.jitter_sigma_ns())
}

#[test]
fn side_peak_position_and_width() {
    let (hist, sigma) = dense_histogram();
    let bw = hist.bin_width_ns;
    for k in [-4i64, -1, 1, 2, 4] {
        let centre = k as f64 * T;
        let in_peak = |i: &usize| (hist.bin_center(*i) - centre).abs() < T / 2.0;
        let idx: Vec<usize> = (0..hist.counts.len()).filter(in_peak).collect();
        let top = *idx.iter().max_by_key(|&&i| hist.counts[i]).unwrap();
        assert!((hist.bin_center(top) - centre).abs() <= bw, "k = {k}: max at {}", hist.bin_center(top));

        if k == 1 {
            let (mut n, mut s1, mut s2) = (0.0, 0.0, 0.0);
            for &i in &idx {
                let c = hist.counts[i] as f64;
                let x = hist.bin_center(i) - centre;
                n += c;
                s1 += c * x;
                s2 += c * x * x;
            }
            let rms = (s2 / n - (s1 / n).powi(2)).sqrt();
            let expected = side_peak_rms(0.2, sigma);
            assert!((rms / expected - 1.0).abs() < 0.05, "{rms} vs {expected}");
        }
    }
}

fn streak_of(gamma: f64, irf: f64, n: u64, seed: u64) -> StreakHistogram {
    let cfg = SourceConfig {
        train: PulseTrain::new(T, n).unwrap(),
        blinking: BlinkingModel::always_on(),
        emission: EmissionModel::new(gamma, PhotonStatistics::Truncated { p1: 1.0, p2: 0.0 }).unwrap(),
        seed,
    };
    streak(&run_source(&cfg), T, 0.025, irf).unwrap()
}

#[test]
fn streak_without_irf_gives_the_lifetime() {
    let fit = fit_lifetime(&streak_of(5.0, 0.0, 1_000_000, 8), DEFAULT_FIT_START_OFFSET_NS).unwrap();
    assert!((fit.tau_ns / 0.2 - 1.0).abs() < 0.02, "{}", fit.tau_ns);
}

#[test]
fn on_and_off_resonance_lifetimes_differ_fivefold() {
    let on = fit_lifetime(&streak_of(5.0, 0.025, 1_000_000, 9), DEFAULT_FIT_START_OFFSET_NS).unwrap();
    let off = fit_lifetime(&streak_of(1.0, 0.025, 1_000_000, 10), DEFAULT_FIT_START_OFFSET_NS).unwrap();
    let ratio = off.tau_ns / on.tau_ns;
    assert!((ratio / 5.0 - 1.0).abs() < 0.05, "{} / {} = {ratio}", off.tau_ns, on.tau_ns);
}

#[test]
fn streak_conserves_photons() {
    let h = streak_of(5.0, 0.025, 10_000, 11);
    assert!((h.total() - 10_000.0).abs() < 1e-6);
}
