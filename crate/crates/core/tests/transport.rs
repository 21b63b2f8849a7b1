use landau_core::{plan_cost, w2_bruteforce, w2_exact, AssignmentSolver, DVec3};
use proptest::prelude::*;

fn cloud(n: usize) -> impl Strategy<Value = Vec<DVec3>> {
    prop::collection::vec((-3.0..3.0f64, -3.0..3.0f64, -3.0..3.0f64), n)
        .prop_map(|v| v.into_iter().map(|(x, y, z)| DVec3::new(x, y, z)).collect())
}

fn pair(max: usize) -> impl Strategy<Value = (Vec<DVec3>, Vec<DVec3>)> {
    (1..=max).prop_flat_map(|n| (cloud(n), cloud(n)))
}

proptest! {
    #[test]
    fn exact_matches_brute_force((a, b) in pair(7)) {
        prop_assert_eq!(w2_exact(&a, &b).unwrap().cost(), w2_bruteforce(&a, &b).unwrap().cost());
    }

    #[test]
    fn plan_is_a_permutation_with_its_reported_cost((a, b) in pair(30)) {
        let plan = w2_exact(&a, &b).unwrap();
        let mut seen = plan.permutation().to_vec();
        seen.sort_unstable();
        prop_assert_eq!(seen, (0..a.len()).collect::<Vec<_>>());
        prop_assert_eq!(plan_cost(&plan, &a, &b).unwrap(), plan.cost());
    }

    #[test]
    fn translation_adds_the_squared_shift((a, b) in pair(20), u in (-1.0..1.0f64, -1.0..1.0f64, -1.0..1.0f64)) {
        // W2^2(A, B + u) = W2^2(A, B) + |u|^2 + 2 u . (mean B - mean A).
        let u = DVec3::new(u.0, u.1, u.2);
        let n = a.len() as f64;
        let mean = |v: &[DVec3]| v.iter().fold(DVec3::zero(), |s, &x| s + x).scale(1.0 / n);
        let moved: Vec<_> = b.iter().map(|&x| x + u).collect();
        let want = w2_exact(&a, &b).unwrap().cost() + u.norm_squared() + 2.0 * u.dot(mean(&b) - mean(&a));
        let got = w2_exact(&a, &moved).unwrap().cost();
        prop_assert!((got - want).abs() <= 1e-9 * (1.0 + want), "{} vs {}", got, want);
    }

    #[test]
    fn warm_solver_agrees_with_cold((a, b) in pair(25), (c, d) in pair(25)) {
        let mut solver = AssignmentSolver::new();
        for (x, y) in [(&a, &b), (&c, &d), (&a, &b)] {
            prop_assert_eq!(solver.solve(x, y).unwrap().cost(), w2_exact(x, y).unwrap().cost());
        }
    }
}

#[test]
fn relabelled_copy_is_at_distance_zero() {
    let a: Vec<DVec3> =
        (0..40).map(|k| DVec3::new((k as f64).sin(), (k as f64 * 0.7).cos(), k as f64 * 0.01)).collect();
    let mut b = a.clone();
    b.reverse();
    let plan = w2_exact(&a, &b).unwrap();
    assert_eq!(plan.cost(), 0.0);
    assert!(plan.permutation().iter().enumerate().all(|(i, &j)| j == 39 - i));
}
