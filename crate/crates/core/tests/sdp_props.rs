use diqkd::sdp::{min_eigenvalue, solve, SdpProblem, SdpStatus, SymSparse};
use nalgebra::DMatrix;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Bounded, strictly feasible problem: trace constraint plus `m` dense random
/// constraints satisfied by a random positive definite `X0`. Generic data, so
/// primal and dual optima are unique.
fn random_problem(seed: u64, n: usize, m: usize) -> SdpProblem {
    let m = m.min(n * (n + 1) / 2 - 2);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let g = DMatrix::from_fn(n, n, |_, _| rng.random_range(-1.0..1.0));
    let x0 = &g * g.transpose() + DMatrix::identity(n, n) * 0.5;
    let random_sym = |rng: &mut ChaCha8Rng| {
        let mut s = SymSparse::new();
        for i in 0..n {
            for j in i..n {
                s.add_cell(i, j, rng.random_range(-1.0..1.0));
            }
        }
        s
    };
    let mut prob = SdpProblem::new(n, random_sym(&mut rng));
    let mut trace = SymSparse::new();
    for i in 0..n {
        trace.add_cell(i, i, 1.0);
    }
    let t = x0.trace();
    prob.add_constraint(trace, t);
    for _ in 0..m {
        let a = random_sym(&mut rng);
        let b = a.inner(&x0);
        prob.add_constraint(a, b);
    }
    prob
}

fn scaled_objective(prob: &SdpProblem, lambda: f64) -> SdpProblem {
    let mut out = SdpProblem::new(prob.order, prob.objective.scaled(lambda));
    for c in &prob.constraints {
        out.add_constraint(c.a.clone(), c.b);
    }
    out
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn optimum_satisfies_weak_duality(seed in any::<u64>(), n in 2usize..6, m in 0usize..4) {
        let prob = random_problem(seed, n, m);
        let sol = solve(&prob).unwrap();
        prop_assert_eq!(sol.status, SdpStatus::Optimal);
        prop_assert!(sol.dual_value >= sol.primal_value - 1e-9 * (1.0 + sol.primal_value.abs()));
        prop_assert!(sol.gap <= 1e-8 * (1.0 + sol.primal_value.abs()));
        prop_assert!(min_eigenvalue(&sol.x) >= -1e-9);
        prop_assert!(min_eigenvalue(&sol.s) >= -1e-9);
    }

    #[test]
    fn objective_scaling_is_equivariant(seed in any::<u64>(), n in 2usize..5, lambda in 0.1f64..10.0) {
        let prob = random_problem(seed, n, 2);
        let base = solve(&prob).unwrap();
        let scaled = solve(&scaled_objective(&prob, lambda)).unwrap();
        prop_assert_eq!(scaled.status, SdpStatus::Optimal);
        let tol = 1e-7 * (1.0 + lambda * base.primal_value.abs());
        prop_assert!((scaled.primal_value - lambda * base.primal_value).abs() < tol);
        prop_assert!((scaled.dual_value - lambda * base.dual_value).abs() < tol);
        // at a rank-deficient optimum the multipliers converge like √gap
        for (a, b) in scaled.dual_values.iter().zip(&base.dual_values) {
            prop_assert!((a - lambda * b).abs() < 1e-3 * (1.0 + (lambda * b).abs()));
        }
    }

    #[test]
    fn duplicated_constraints_do_not_change_the_optimum(seed in any::<u64>(), n in 2usize..5) {
        let prob = random_problem(seed, n, 2);
        let mut dup = prob.clone();
        for c in prob.constraints.clone() {
            dup.add_constraint(c.a.scaled(2.0), 2.0 * c.b);
        }
        let (a, b) = (solve(&prob).unwrap(), solve(&dup).unwrap());
        prop_assert!((a.primal_value - b.primal_value).abs() < 1e-9 * (1.0 + a.primal_value.abs()));
    }

    #[test]
    fn solves_are_deterministic(seed in any::<u64>()) {
        let prob = random_problem(seed, 4, 3);
        let (a, b) = (solve(&prob).unwrap(), solve(&prob).unwrap());
        prop_assert_eq!(a.primal_value.to_bits(), b.primal_value.to_bits());
        prop_assert_eq!(a.dual_values, b.dual_values);
        prop_assert_eq!(a.x, b.x);
    }
}

#[test]
fn dump_round_trip_preserves_the_optimum() {
    let prob = random_problem(5, 4, 3);
    let back = SdpProblem::from_dump(&prob.to_dump()).unwrap();
    assert_eq!(solve(&prob).unwrap().primal_value, solve(&back).unwrap().primal_value);
}
