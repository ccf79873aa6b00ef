use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rfggd_core::qp::{kkt_residuals, min_relaxation, solve, solve_from, QpProblem, QpStatus, DEFAULT_TOL};
use rfggd_core::{Mat, Vector};

fn random_qp(seed: u64) -> QpProblem {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = rng.random_range(1..=6);
    let m = rng.random_range(0..=10);
    let mut normal = || rng.random_range(-1.0..1.0);
    let a = Mat::from_fn(n, n, |_, _| normal());
    let h = a.transpose() * &a + Mat::identity(n, n) * 0.1;
    let f = Vector::from_fn(n, |_, _| normal());
    let g = Mat::from_fn(m, n, |_, _| normal());
    let w = Vector::from_fn(m, |_, _| normal());
    QpProblem::new(h, f, g, w).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn optimal_solutions_satisfy_kkt(seed in any::<u64>()) {
        let p = random_qp(seed);
        let s = solve(&p, DEFAULT_TOL);
        prop_assert_ne!(s.status, QpStatus::NumericalFailure);
        if s.is_optimal() {
            let r = kkt_residuals(&p, &s.z, &s.duals);
            prop_assert!(r.within(&p, DEFAULT_TOL), "{:?}", r);
        } else {
            let cert = s.certificate.unwrap();
            prop_assert!(cert.max_slack() > 0.0);
            prop_assert!(cert.limiting_index.is_some());
        }
    }

    #[test]
    fn row_order_does_not_matter(seed in any::<u64>()) {
        let p = random_qp(seed);
        let m = p.n_cons();
        let perm: Vec<usize> = (0..m).rev().collect();
        let q = p.permute_rows(&perm).unwrap();
        let (a, b) = (solve(&p, DEFAULT_TOL), solve(&q, DEFAULT_TOL));
        prop_assert_eq!(a.status, b.status);
        if a.is_optimal() {
            prop_assert!((a.objective - b.objective).abs() <= 1e-7 * (1.0 + a.objective.abs()));
        }
        let (ra, rb) = (min_relaxation(&p).unwrap(), min_relaxation(&q).unwrap());
        prop_assert!((ra.max_slack() - rb.max_slack()).abs() <= 1e-7);
        let total = |r: &rfggd_core::qp::RelaxationReport| r.slacks.norm_squared();
        prop_assert!((total(&ra) - total(&rb)).abs() <= 1e-9);
    }

    #[test]
    fn warm_start_matches_cold_start(seed in any::<u64>()) {
        let p = random_qp(seed);
        let cold = solve(&p, DEFAULT_TOL);
        prop_assume!(cold.is_optimal());
        let warm = solve_from(&p, &cold.z, DEFAULT_TOL);
        prop_assert!(warm.is_optimal());
        prop_assert!((warm.z - &cold.z).amax() <= 1e-6);
    }

    #[test]
    fn optimum_beats_feasible_samples(seed in any::<u64>()) {
        let p = random_qp(seed);
        let s = solve(&p, DEFAULT_TOL);
        prop_assume!(s.is_optimal());
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed);
        for _ in 0..50 {
            let z = &s.z + Vector::from_fn(p.n_vars(), |_, _| rng.random_range(-0.5..0.5));
            if p.margins(&z).iter().all(|e| *e >= 0.0) {
                prop_assert!(p.objective(&z) >= s.objective - 1e-8);
            }
        }
    }
}

#[test]
fn relaxation_of_feasible_problem_is_zero() {
    let p = QpProblem::new(
        Mat::identity(2, 2),
        Vector::zeros(2),
        Mat::from_row_slice(2, 2, &[1.0, 0.0, 0.0, 1.0]),
        Vector::from_vec(vec![1.0, -3.0]),
    )
    .unwrap();
    let r = min_relaxation(&p).unwrap();
    assert!(r.is_feasible());
    assert_eq!(r.limiting_index, None);
}

#[test]
fn contradictory_bounds_split_the_gap() {
    // z >= 1 and -z >= 0 (z <= 0): the squared slacks are shared equally
    let p = QpProblem::new(
        Mat::identity(1, 1),
        Vector::zeros(1),
        Mat::from_row_slice(2, 1, &[1.0, -1.0]),
        Vector::from_vec(vec![1.0, 0.0]),
    )
    .unwrap();
    let r = min_relaxation(&p).unwrap();
    assert!((r.slacks[0] - 0.5).abs() < 1e-9 && (r.slacks[1] - 0.5).abs() < 1e-9);
    assert_eq!(r.limiting_index, Some(0));
    assert_eq!(solve(&p, DEFAULT_TOL).status, QpStatus::Infeasible);
}
