use diqkd::bell::{bell_value, build_chained, build_chsh};
use diqkd::npa::{quantum_max, solve_point, Level, RelaxationProblem};
use diqkd::quantum::{tightness_family, NoiseModel, Preset};
use diqkd::rate::{linspace, TSIRELSON};

fn chsh_problem(level: Level) -> RelaxationProblem {
    RelaxationProblem::build(&build_chsh(), 0, 0, level).unwrap()
}

#[test]
fn hierarchy_is_monotone() {
    let probs = [Level::One, Level::OneAB, Level::Two].map(chsh_problem);
    for g in linspace(2.0, TSIRELSON - 1e-3, 12) {
        let v: Vec<f64> = probs.iter().map(|p| solve_point(p, g).unwrap().value).collect();
        assert!(v[2] <= v[1] + 1e-7 && v[1] <= v[0] + 1e-7, "g={g}: {v:?}");
    }
}

#[test]
fn certificates_bound_every_grid_point() {
    let prob = chsh_problem(Level::Two);
    let grid = linspace(2.0, TSIRELSON, 15);
    let sols: Vec<_> = grid.iter().map(|&g| solve_point(&prob, g).unwrap()).collect();
    for s in &sols {
        assert!(s.certificate.nu <= 1e-9);
        assert_eq!(s.value, s.certificate.eval(s.certificate.g0));
        for (g, other) in grid.iter().zip(&sols) {
            assert!(s.certificate.eval(*g) >= other.value - 1e-6, "certificate at {} fails at {g}", s.certificate.g0);
        }
    }
}

#[test]
fn tightness_family_meets_the_relaxation() {
    let prob = chsh_problem(Level::Two);
    for g in linspace(2.0, TSIRELSON, 12) {
        let achieved = tightness_family(g).unwrap().model.table().unwrap().marginal_a(0, 0, 0);
        let relaxed = solve_point(&prob, g).unwrap().value;
        assert!((achieved - relaxed).abs() < 1e-4, "g={g}: {achieved} vs {relaxed}");
        assert!(relaxed >= achieved - 1e-6);
    }
}

#[test]
fn quantum_maxima_are_achieved() {
    let one = NoiseModel::new(1.0).unwrap();
    let cases = [
        (Preset::ChshOptimal, Level::One, 1e-6),
        (Preset::ChainedOptimal(3), Level::Two, 1e-4),
        (Preset::Cglmp3Optimal, Level::OneAB, 1e-4),
    ];
    for (preset, level, tol) in cases {
        let ineq = preset.inequality().unwrap();
        let achieved = bell_value(&ineq, &preset.bell_table(one).unwrap()).unwrap();
        let bound = quantum_max(&ineq, level).unwrap();
        assert!(bound >= achieved - 1e-9, "{}: {bound} < {achieved}", ineq.name);
        if preset != Preset::Cglmp3Optimal {
            assert!(bound - achieved < tol, "{}: {bound} vs {achieved}", ineq.name);
        }
    }
    assert!((quantum_max(&build_chained(3).unwrap(), Level::Two).unwrap() - 27f64.sqrt()).abs() < 1e-4);
}

#[test]
fn chained_relaxation_levels_agree() {
    let ineq = build_chained(3).unwrap();
    let coarse = RelaxationProblem::build(&ineq, 0, 2, Level::OneAB).unwrap();
    let fine = RelaxationProblem::build(&ineq, 0, 2, Level::Two).unwrap();
    for g in [4.4, 4.8] {
        let (c, f) = (solve_point(&coarse, g).unwrap().value, solve_point(&fine, g).unwrap().value);
        assert!(f <= c + 1e-7);
    }
}
