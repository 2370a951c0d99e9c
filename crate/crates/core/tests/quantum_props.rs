use diqkd::bell::{bell_value, build_chsh, CorrelationTable};
use diqkd::quantum::{
    correlations, random_pure_state, random_qubit_measurements, tightness_family, NoiseModel, Preset,
};
use diqkd::rate::linspace;
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn assert_no_signalling(t: &CorrelationTable) {
    let s = t.scenario;
    for x in 0..s.inputs_a {
        for a in 0..s.outputs_a {
            let first = t.marginal_a(a, x, 0);
            for y in 1..s.inputs_b {
                assert!((t.marginal_a(a, x, y) - first).abs() < 1e-10);
            }
        }
    }
    for y in 0..s.inputs_b {
        for b in 0..s.outputs_b {
            let first = t.marginal_b(b, 0, y);
            for x in 1..s.inputs_a {
                assert!((t.marginal_b(b, x, y) - first).abs() < 1e-10);
            }
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn random_models_are_no_signalling(seed in any::<u64>(), inputs in 2usize..4) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let rho = random_pure_state(4, &mut rng).unwrap();
        let alice = random_qubit_measurements(inputs, &mut rng).unwrap();
        let bob = random_qubit_measurements(inputs, &mut rng).unwrap();
        assert_no_signalling(&correlations(&rho, &alice, &bob).unwrap());
    }

    #[test]
    fn visibility_is_linear(v in 0.0f64..=1.0) {
        for preset in [Preset::ChshOptimal, Preset::ChainedOptimal(3), Preset::Cglmp3Optimal] {
            let noisy = preset.device_table(NoiseModel::new(v).unwrap()).unwrap();
            let pure = preset.device_table(NoiseModel::new(1.0).unwrap()).unwrap();
            let uniform = CorrelationTable::uniform(pure.scenario);
            let expected = pure.mix(v, &uniform).unwrap();
            for (p, q) in noisy.values().iter().zip(expected.values()) {
                prop_assert!((p - q).abs() < 1e-12);
            }
        }
    }
}

#[test]
fn presets_are_no_signalling() {
    for preset in [Preset::ChshOptimal, Preset::ChainedOptimal(3), Preset::Cglmp3Optimal] {
        for v in [0.5, 0.9, 1.0] {
            assert_no_signalling(&preset.device_table(NoiseModel::new(v).unwrap()).unwrap());
        }
    }
}

#[test]
fn tightness_family_saturates_the_bound() {
    let chsh = build_chsh();
    for g in linspace(2.0, 2.0 * std::f64::consts::SQRT_2, 50) {
        let m = tightness_family(g).unwrap();
        let table = m.model.table().unwrap();
        assert_no_signalling(&table);
        assert!((bell_value(&chsh, &table).unwrap() - g).abs() < 1e-10, "g={g}");
        let bound = 0.5 + 0.5 * (2.0 - g * g / 4.0).max(0.0).sqrt();
        assert!((table.marginal_a(0, 0, 0) - bound).abs() < 1e-9, "g={g}");
        assert!((m.spec.phi.tan() - (2.0 * m.spec.theta).sin()).abs() < 1e-12);
    }
}
