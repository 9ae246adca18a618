use micropost_core::cavity::{
    build_micropost_stack, find_resonance, reflectance_spectrum, Layer, LayerStack, MicropostDesign, SPACER_LABEL,
};
use micropost_core::fdtd::*;

fn small_cavity(pairs_top: usize, pairs_bottom: usize) -> LayerStack {
    let design = MicropostDesign { top_pairs: pairs_top, bottom_pairs: pairs_bottom, ..Default::default() };
    build_micropost_stack(&design).unwrap()
}

#[test]
fn vacuum_grid_reflects_nothing() {
    let stack = LayerStack::new(1.0, vec![Layer::new(400.0, 1.0, "gap").unwrap()], 1.0).unwrap();
    let grid = discretize_stack(&stack, 2.0).unwrap();
    let opts = ReflectanceOptions { samples: 101, ..Default::default() };
    let spec = run_reflectance_with(&grid, 960.0, 100.0, opts).unwrap();
    let worst = spec.reflectance.iter().cloned().fold(0.0, f64::max);
    assert!(worst < 1e-4, "{worst}");
}

#[test]
fn air_gaas_interface_matches_fresnel() {
    let stack = LayerStack::new(1.0, vec![], 3.5).unwrap();
    let grid = discretize_stack(&stack, 2.0).unwrap();
    let opts = ReflectanceOptions { samples: 101, ..Default::default() };
    let spec = run_reflectance_with(&grid, 960.0, 100.0, opts).unwrap();
    for (l, r) in spec.iter() {
        assert!((r - 0.3086).abs() < 0.003, "{l}: {r}");
    }
}

#[test]
fn absorber_reflection_is_small_in_substrate() {
    // The whole grid is GaAs, so only the absorbers can reflect.
    let stack = LayerStack::new(3.5, vec![], 3.5).unwrap();
    let grid = discretize_stack(&stack, 2.0).unwrap();
    let opts = ReflectanceOptions { samples: 101, ..Default::default() };
    let spec = run_reflectance_with(&grid, 960.0, 100.0, opts).unwrap();
    assert!(spec.reflectance.iter().all(|&r| r < 1e-4));
}

#[test]
fn short_cavity_reflectance_and_q_match_transfer_matrix() {
    let stack = small_cavity(8, 16);
    let grid = discretize_stack(&stack, 2.0).unwrap();
    let opts = ReflectanceOptions { samples: 201, ..Default::default() };
    let fdtd = run_reflectance_with(&grid, 958.0, 100.0, opts).unwrap();
    let tmm = reflectance_spectrum(grid.snapped_stack(), 858.0, 1058.0, 201).unwrap();
    let rms = (fdtd.reflectance.iter().zip(&tmm.reflectance).map(|(a, b)| (a - b).powi(2)).sum::<f64>()
        / fdtd.len() as f64)
        .sqrt();
    assert!(rms < 0.01, "{rms}");

    let fine = reflectance_spectrum(&stack, 850.0, 1050.0, 20_001).unwrap();
    let res = find_resonance(&fine, Default::default()).unwrap();
    let src = grid.layer_center_cell(SPACER_LABEL).unwrap();
    let ro = RingdownOptions { bandwidth_nm: 10.0, settle_steps: 20_000, record_steps: 100_000 };
    let (q, _) = run_ringdown_with(&grid, src, res.lambda_c_nm, ro).unwrap();
    assert!((q / res.q_factor - 1.0).abs() < 0.10, "fdtd {q} tmm {}", res.q_factor);
}

#[test]
fn grid_refinement_changes_q_little() {
    let stack = small_cavity(8, 16);
    let fine = reflectance_spectrum(&stack, 850.0, 1050.0, 20_001).unwrap();
    let res = find_resonance(&fine, Default::default()).unwrap();
    let q_at = |dx: f64, steps: u64| {
        let grid = discretize_stack(&stack, dx).unwrap();
        let src = grid.layer_center_cell(SPACER_LABEL).unwrap();
        let ro = RingdownOptions { bandwidth_nm: 10.0, settle_steps: 20_000, record_steps: steps };
        run_ringdown_with(&grid, src, res.lambda_c_nm, ro).unwrap().0
    };
    let q1 = q_at(2.0, 100_000);
    let q2 = q_at(1.0, 200_000);
    assert!((q2 / q1 - 1.0).abs() < 0.05, "{q1} {q2}");
}

#[test]
fn closed_lossless_cavity_does_not_decay() {
    let stack = small_cavity(8, 16);
    let grid = discretize_stack(&stack, 2.0).unwrap().with_absorber(0).unwrap();
    let fine = reflectance_spectrum(&stack, 850.0, 1050.0, 20_001).unwrap();
    let res = find_resonance(&fine, Default::default()).unwrap();
    let src = grid.layer_center_cell(SPACER_LABEL).unwrap();
    let ro = RingdownOptions { bandwidth_nm: 10.0, settle_steps: 20_000, record_steps: 100_000 };
    match run_ringdown_with(&grid, src, res.lambda_c_nm, ro) {
        Err(FdtdError::NoDecayDetected(NoDecay::Undamped { .. })) => {}
        other => panic!("{other:?}"),
    }
}

#[test]
fn vacuum_pulse_arrives_at_light_speed() {
    let dx = 2.0;
    let grid = uniform_grid(1.0, 6000, dx, 64).unwrap();
    let mut sim = Simulation::new(&grid);
    let pulse = GaussianPulse::new(900.0, 200.0).unwrap();
    let (src, probe) = (500usize, 5000usize);
    let mut peak = (0.0, 0.0);
    let mut envelope = vec![0.0; 0];
    let mut times = vec![];
    for _ in 0..10_000 {
        sim.step();
        let t = sim.time_nm();
        if t <= pulse.end() {
            sim.inject(src, pulse.value(t));
        }
        envelope.push(sim.e()[probe].powi(2));
        times.push(t);
    }
    // Smooth E² over one optical period to get the envelope peak.
    let w = (900.0 / sim.dt_nm()).round() as usize;
    for i in w..envelope.len() - w {
        let m: f64 = envelope[i - w / 2..i + w / 2].iter().sum();
        if m > peak.1 {
            peak = (times[i], m);
        }
    }
    let expected = pulse.delay + (probe - src) as f64 * dx;
    assert!((peak.0 / expected - 1.0).abs() < 0.01, "{} vs {}", peak.0, expected);
}

#[test]
fn energy_does_not_rise_after_source_turns_off() {
    let stack = small_cavity(8, 16);
    let grid = discretize_stack(&stack, 2.0).unwrap();
    let mut sim = Simulation::new(&grid);
    let src = grid.layer_center_cell(SPACER_LABEL).unwrap();
    let pulse = GaussianPulse::new(955.0, 50.0).unwrap();
    while sim.time_nm() <= pulse.end() {
        sim.step();
        let t = sim.time_nm();
        sim.inject(src, pulse.value(t));
    }
    let mut last = f64::INFINITY;
    for _ in 0..200 {
        for _ in 0..199 {
            sim.step();
        }
        let u = sim.step_with_energy();
        assert!(u <= last * 1.001, "{u} > {last}");
        last = u;
    }
}

#[test]
fn long_run_stays_bounded() {
    let stack = small_cavity(8, 16);
    let grid = discretize_stack(&stack, 2.0).unwrap();
    let mut sim = Simulation::new(&grid);
    let src = grid.layer_center_cell(SPACER_LABEL).unwrap();
    let pulse = GaussianPulse::new(955.0, 50.0).unwrap();
    let mut max_during = 0.0f64;
    while sim.time_nm() <= pulse.end() {
        sim.step();
        let t = sim.time_nm();
        sim.inject(src, pulse.value(t));
        max_during = max_during.max(sim.e().iter().fold(0.0, |m: f64, v| m.max(v.abs())));
    }
    for _ in 0..200_000 {
        sim.step();
    }
    let max_after = sim.e().iter().fold(0.0, |m: f64, v| m.max(v.abs()));
    assert!(max_after.is_finite() && max_after <= max_during);
}
