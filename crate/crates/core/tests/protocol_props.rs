use diqkd::bell::{build_chsh, BellInequality, CorrelationTable};
use diqkd::npa::Level;
use diqkd::protocol::{estimate_bell, run, run_batch, toeplitz_hash, EstimationRecord, ProtocolConfig};
use diqkd::quantum::{NoiseModel, Preset};
use diqkd::rate::{build_curve, linspace, CurveSource, TradeoffCurve, TSIRELSON};
use diqkd::Execution;
use proptest::prelude::*;
use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn chsh_curve() -> TradeoffCurve {
    build_curve(&build_chsh(), CurveSource::AnalyticChsh, &linspace(2.0, TSIRELSON, 20)).unwrap()
}

fn config(preset: Preset, v: f64, n: u64, seed: u64) -> ProtocolConfig {
    let table = preset.device_table(NoiseModel::new(v).unwrap()).unwrap();
    let (x, y) = preset.raw_inputs();
    ProtocolConfig::new(preset.inequality().unwrap(), table, x, y, n, seed).unwrap()
}

/// `n` estimation records with uniform inputs, sampled from `table`.
fn draw_records(table: &CorrelationTable, n: usize, seed: u64) -> Vec<EstimationRecord> {
    let s = table.scenario;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let samplers: Vec<Vec<WeightedIndex<f64>>> = (0..s.inputs_a)
        .map(|x| (0..s.inputs_b).map(|y| WeightedIndex::new(table.block(x, y)).unwrap()).collect())
        .collect();
    (0..n)
        .map(|_| {
            let (x, y) = (rng.random_range(0..s.inputs_a), rng.random_range(0..s.inputs_b));
            let k = samplers[x][y].sample(&mut rng);
            EstimationRecord { x, y, a: k / s.outputs_b, b: k % s.outputs_b }
        })
        .collect()
}

/// Upper tail of the chi-square distribution with an even number of degrees of freedom.
fn chi_square_tail(x: f64, dof: usize) -> f64 {
    assert!(dof.is_multiple_of(2));
    let h = x / 2.0;
    let mut term = 1.0;
    let mut sum = 1.0;
    for k in 1..dof / 2 {
        term *= h / k as f64;
        sum += term;
    }
    (-h).exp() * sum
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn key_length_respects_the_budget(v in 0.85f64..=1.0, log_n in 3.0f64..5.0, seed in any::<u64>()) {
        let mut cfg = config(Preset::ChshOptimal, v, 10f64.powf(log_n) as u64, seed);
        cfg.n_est = 50_000;
        let r = run(&cfg, &chsh_curve()).unwrap();
        prop_assert_eq!(r.key.len() as u64, r.key_len);
        prop_assert_eq!(&r.bob_corrected, &r.alice_raw);
        if r.key_len > 0 {
            prop_assert!(r.key_len + r.n_pub + r.slack_bits <= r.report.h_min_bound.floor() as u64);
        }
    }
}

#[test]
fn raw_error_rate_converges() {
    let curve = chsh_curve();
    for n in [1_000u64, 10_000, 100_000] {
        for v in [0.8, 0.9, 0.95, 1.0] {
            let r = run(&config(Preset::ChshOptimal, v, n, n ^ 17), &curve).unwrap();
            let q = (1.0 - v) / 2.0;
            let sigma = (q * (1.0 - q) / n as f64).sqrt();
            assert!((r.qber_emp - q).abs() <= 5.0 * sigma, "N={n} v={v}: {} vs {q}", r.qber_emp);
        }
    }
}

#[test]
fn estimation_inputs_are_uniform() {
    let preset = Preset::ChainedOptimal(3);
    let ineq = preset.inequality().unwrap();
    let curve = build_curve(&ineq, CurveSource::Sdp(Level::OneAB), &[4.0, 5.0]).unwrap();
    for seed in 0..5 {
        let mut cfg = config(preset, 0.9, 100, seed);
        cfg.n_est = 90_000;
        let r = run(&cfg, &curve).unwrap();
        let mut cells = [0u64; 9];
        for rec in &r.est_records {
            cells[rec.x * 3 + rec.y] += 1;
        }
        let expected = cfg.n_est as f64 / 9.0;
        let chi2: f64 = cells.iter().map(|&c| (c as f64 - expected).powi(2) / expected).sum();
        let p = chi_square_tail(chi2, 8);
        assert!(p > 1e-6, "seed {seed}: chi2 = {chi2}, p = {p}");
    }
}

#[test]
fn chi_square_tail_reference_values() {
    assert!((chi_square_tail(0.0, 8) - 1.0).abs() < 1e-15);
    assert!((chi_square_tail(15.507313, 8) - 0.05).abs() < 1e-6);
    assert!((chi_square_tail(2.0, 2) - (-1.0f64).exp()).abs() < 1e-15);
}

#[test]
fn runs_are_reproducible() {
    let curve = chsh_curve();
    let cfg = config(Preset::ChshOptimal, 0.97, 20_000, 11);
    assert_eq!(run(&cfg, &curve).unwrap(), run(&cfg, &curve).unwrap());
    let seeds: Vec<u64> = (0..8).collect();
    let seq = run_batch(&cfg, &curve, &seeds, Execution::Sequential);
    let par = run_batch(&cfg, &curve, &seeds, Execution::Parallel);
    for (a, b) in seq.into_iter().zip(par) {
        assert_eq!(a.unwrap(), b.unwrap());
    }
}

#[test]
fn uniform_records_are_centred() {
    let chsh = build_chsh();
    let table = CorrelationTable::uniform(chsh.scenario);
    for seed in 0..10 {
        let est = estimate_bell(&draw_records(&table, 10_000, seed), &chsh).unwrap();
        assert!(est.reliable);
        assert!(est.g.abs() <= 4.0 * est.std_error, "seed {seed}: {} ± {}", est.g, est.std_error);
    }
}

#[test]
fn deterministic_records_give_the_local_value() {
    let chsh = build_chsh();
    let records: Vec<EstimationRecord> =
        (0..2).flat_map(|x| (0..2).map(move |y| EstimationRecord { x, y, a: 0, b: 0 })).cycle().take(400).collect();
    let est = estimate_bell(&records, &chsh).unwrap();
    assert_eq!(est.g, 2.0);
    assert_eq!(est.std_error, 0.0);
}

#[test]
fn estimate_error_shrinks_as_inverse_root() {
    let chsh: BellInequality = build_chsh();
    let table = Preset::ChshOptimal.bell_table(NoiseModel::new(1.0).unwrap()).unwrap();
    let mut pts = Vec::new();
    for (k, n) in [1_000usize, 10_000, 100_000, 1_000_000].into_iter().enumerate() {
        let est = estimate_bell(&draw_records(&table, n, k as u64), &chsh).unwrap();
        assert!((est.g - TSIRELSON).abs() <= 4.0 * est.std_error, "N_est={n}: {}", est.g);
        pts.push(((n as f64).ln(), est.std_error.ln()));
    }
    let (mx, my) = pts.iter().fold((0.0, 0.0), |(a, b), p| (a + p.0 / 4.0, b + p.1 / 4.0));
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let slope = sxy / sxx;
    assert!((slope + 0.5).abs() < 0.05, "slope {slope}");
}

#[test]
fn empty_records_are_rejected() {
    assert!(estimate_bell(&[], &build_chsh()).is_err());
}

#[test]
fn ideal_devices_produce_a_key() {
    let r = run(&config(Preset::ChshOptimal, 1.0, 1_000_000, 42), &chsh_curve()).unwrap();
    assert!((r.g_est - TSIRELSON).abs() <= 3.0 * r.std_error, "{} ± {}", r.g_est, r.std_error);
    assert_eq!(r.qber_emp, 0.0);
    assert!(r.key_len > 0);
    assert_eq!(r.key.len() as u64, r.key_len);
}

#[test]
fn noisy_devices_produce_no_key() {
    let r = run(&config(Preset::ChshOptimal, 0.8, 10_000, 42), &chsh_curve()).unwrap();
    assert_eq!(r.key_len, 0);
    assert!(r.key.is_empty());
}

/// Collision rate of two fixed distinct 64-bit inputs over hash seeds `0..1e5`.
fn toeplitz_collision_rate(out_len: usize) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let x: Vec<u8> = (0..64).map(|_| rng.random_range(0..2)).collect();
    let mut y = x.clone();
    y[17] ^= 1;
    y[40] ^= 1;
    let trials = 100_000u64;
    let hits = (0..trials)
        .filter(|&seed| toeplitz_hash(&x, out_len, seed).unwrap() == toeplitz_hash(&y, out_len, seed).unwrap())
        .count();
    hits as f64 / trials as f64
}

#[test]
fn toeplitz_family_is_two_universal() {
    for m in [8usize, 16] {
        let rate = toeplitz_collision_rate(m);
        let limit = 2f64.powi(-(m as i32)) * 1.05;
        assert!(rate <= limit, "out_len {m}: collision rate {rate} > {limit}");
    }
}

#[test]
fn toeplitz_edge_cases() {
    assert!(toeplitz_hash(&[1, 0, 1], 0, 5).unwrap().is_empty());
    assert!(toeplitz_hash(&[1, 0, 1], 4, 5).is_err());
}
