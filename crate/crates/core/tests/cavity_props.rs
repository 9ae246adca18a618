use micropost_core::cavity::*;
use num_complex::Complex64;
use proptest::prelude::*;

fn layer_strategy() -> impl Strategy<Value = Layer> {
    (0.0f64..400.0, 1.0f64..4.0).prop_map(|(d, n)| Layer::new(d, n, "x").unwrap())
}

fn stack_strategy() -> impl Strategy<Value = LayerStack> {
    (1.0f64..4.0, prop::collection::vec(layer_strategy(), 0..16), 1.0f64..4.0)
        .prop_map(|(a, layers, s)| LayerStack::new(a, layers, s).unwrap())
}

/// Rouard recursion from the substrate upwards, independent of the matrix code.
fn rouard_reflectance(stack: &LayerStack, lambda: f64) -> f64 {
    let mut below = stack.substrate_index();
    let mut r = Complex64::new(0.0, 0.0);
    for layer in stack.layers().iter().rev() {
        let n = layer.index;
        let rho = (n - below) / (n + below);
        let delta = 2.0 * std::f64::consts::PI * n * layer.thickness_nm / lambda;
        // Combine with the interface below this layer, then cross the layer.
        r = (rho + r) / (1.0 + rho * r) * Complex64::from_polar(1.0, -2.0 * delta);
        below = n;
    }
    let n0 = stack.ambient_index();
    let rho = (n0 - below) / (n0 + below);
    let top = (rho + r) / (1.0 + rho * r);
    top.norm_sqr()
}

fn default_stack() -> LayerStack {
    build_micropost_stack(&MicropostDesign::default()).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn reflectance_stays_in_unit_interval(stack in stack_strategy(), lambda in 300.0f64..2000.0) {
        let r = reflectance(&stack, lambda).unwrap();
        prop_assert!((-1e-9..=1.0 + 1e-9).contains(&r), "{r}");
    }

    #[test]
    fn layer_matrix_is_unimodular(layer in layer_strategy(), lambda in 300.0f64..2000.0) {
        let det = layer_matrix(&layer, lambda).unwrap().det();
        prop_assert!((det - Complex64::new(1.0, 0.0)).norm() < 1e-12, "{det}");
    }

    #[test]
    fn reflectance_is_the_same_from_both_sides(stack in stack_strategy(), lambda in 300.0f64..2000.0) {
        let a = reflectance(&stack, lambda).unwrap();
        let b = reflectance(&stack.reversed(), lambda).unwrap();
        prop_assert!((a - b).abs() < 1e-12, "{a} vs {b}");
    }

    #[test]
    fn symmetric_stack_reversal_is_invisible(half in prop::collection::vec(layer_strategy(), 0..8),
                                             medium in 1.0f64..4.0, lambda in 300.0f64..2000.0) {
        let mut layers = half.clone();
        layers.extend(half.into_iter().rev());
        let stack = LayerStack::new(medium, layers, medium).unwrap();
        let a = reflectance(&stack, lambda).unwrap();
        let b = reflectance(&stack.reversed(), lambda).unwrap();
        prop_assert!((a - b).abs() < 1e-12);
    }

    #[test]
    fn matches_rouard_recursion(stack in stack_strategy(), lambda in 300.0f64..2000.0) {
        let a = reflectance(&stack, lambda).unwrap();
        let b = rouard_reflectance(&stack, lambda);
        prop_assert!((a - b).abs() < 1e-10, "{a} vs {b}");
    }
}

#[test]
fn paper_stack_is_highly_reflective_at_design_wavelength() {
    let stack = default_stack();
    let r = reflectance(&stack, 960.4).unwrap();
    let oracle = rouard_reflectance(&stack, 960.4);
    assert!(r > 0.99, "{r}");
    assert!((r - oracle).abs() < 1e-10);
}

#[test]
fn stopband_contains_design_wavelength() {
    let spec = reflectance_spectrum(&default_stack(), 850.0, 1050.0, 2001).unwrap();
    let res = find_resonance(&spec, Default::default()).unwrap();
    assert!(res.stopband_nm.0 < 960.4 && 960.4 < res.stopband_nm.1, "{:?}", res.stopband_nm);
}

#[test]
fn peak_reflectance_grows_with_pair_count() {
    let gaas = Layer::new(68.6, 3.5, "GaAs").unwrap();
    let alas = Layer::new(960.4 / (4.0 * 2.9), 2.9, "AlAs").unwrap();
    let mut last = 0.0;
    for pairs in 0..25 {
        let mut layers = Vec::new();
        for _ in 0..pairs {
            layers.push(gaas.clone());
            layers.push(alas.clone());
        }
        let stack = LayerStack::new(1.0, layers, 3.5).unwrap();
        let spec = reflectance_spectrum(&stack, 900.0, 1020.0, 601).unwrap();
        let peak = spec.reflectance.iter().cloned().fold(0.0, f64::max);
        assert!(peak >= last - 1e-12, "{pairs} pairs: {peak} < {last}");
        last = peak;
    }
    assert!(last > 0.999);
}

#[test]
fn resonance_is_stable_under_denser_sampling() {
    for design in
        [MicropostDesign::default(), MicropostDesign { top_pairs: 10, bottom_pairs: 20, ..Default::default() }]
    {
        let stack = build_micropost_stack(&design).unwrap();
        let (a, b, n) = DEFAULT_SPECTRUM;
        let coarse = find_resonance(&reflectance_spectrum(&stack, a, b, n).unwrap(), Default::default()).unwrap();
        let fine = find_resonance(&reflectance_spectrum(&stack, a, b, 2 * n - 1).unwrap(), Default::default()).unwrap();
        assert!((fine.q_factor / coarse.q_factor - 1.0).abs() < 1e-3, "{} vs {}", coarse.q_factor, fine.q_factor);
        assert!((fine.lambda_c_nm - coarse.lambda_c_nm).abs() < 1e-3);
    }
}

#[test]
fn sapphire_cap_lowers_q() {
    let (a, b, n) = DEFAULT_SPECTRUM;
    let bare = find_resonance(&reflectance_spectrum(&default_stack(), a, b, n).unwrap(), Default::default()).unwrap();
    let cap = Layer::new(500.0, 1.75, "sapphire").unwrap();
    let capped_stack = build_micropost_stack(&MicropostDesign { cap: Some(cap), ..Default::default() }).unwrap();
    let capped = find_resonance(&reflectance_spectrum(&capped_stack, a, b, n).unwrap(), Default::default()).unwrap();
    assert!(capped.q_factor < bare.q_factor, "{} !< {}", capped.q_factor, bare.q_factor);
}

#[test]
fn empty_stack_has_no_stopband() {
    let stack = LayerStack::new(1.0, vec![], 3.5).unwrap();
    let spec = reflectance_spectrum(&stack, 850.0, 1050.0, 201).unwrap();
    assert!(matches!(find_resonance(&spec, Default::default()), Err(CavityError::NoStopband { .. })));
}
