use proptest::prelude::*;
use rfggd_core::plant::{car_model, unicycle_model, ParamVector, PlantModel, RateBox, UnicycleConfig};
use rfggd_core::qp::min_relaxation;
use rfggd_core::rfggd::{
    feasible_direction, limiting_ascent, online_adapt, update_feasible, update_infeasible, Case2Status,
    RfggdConfig, UpdateStatus,
};
use rfggd_core::rollout::{grad_margins, rollout, GradientBundle};
use rfggd_core::{Mat, Vector};

fn car_cfg() -> RfggdConfig {
    RfggdConfig {
        lookahead: 100,
        ..RfggdConfig::default()
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn directions_respect_linearized_margins(
        values in prop::collection::vec(-0.5f64..2.0, 1..12),
        grads in prop::collection::vec(-3.0f64..3.0, 36),
        ascent in prop::collection::vec(-2.0f64..2.0, 3),
        radius in 0.05f64..2.0,
    ) {
        let m = values.len();
        let bundle = GradientBundle {
            grad_objective: None,
            margin_values: vec![Vector::from_vec(values)],
            margin_grads: vec![Mat::from_fn(m, 3, |r, c| grads[3 * r + c])],
        };
        let cfg = RfggdConfig { trust_radius: radius, ..RfggdConfig::default() };
        let dir = feasible_direction(&bundle, &Vector::from_vec(ascent), &cfg).unwrap();
        prop_assert!(dir.d_theta.amax() <= radius + 1e-9);
        prop_assert!(dir.predicted_margins[0].iter().all(|e| *e >= -1e-8));
        prop_assert!(dir.objective_projection >= -1e-12);
    }

    #[test]
    fn case2_history_never_decreases(x0 in prop::sample::select(vec![0.1, 0.5]), a in 0.002f64..0.05, b in 0.002f64..0.05) {
        let car = car_model(0.3, 0.01).unwrap();
        let out = update_infeasible(&car, &Vector::from_element(1, x0), 0.0, &ParamVector::rates(&[a, b]), &car_cfg()).unwrap();
        prop_assert!(out.feasibility_history.windows(2).all(|w| w[0] <= w[1]));
        let bounds = RateBox::default();
        prop_assert!(out.iterates.iter().all(|v| v.iter().all(|r| bounds.contains(*r))));
    }

    #[test]
    fn accepted_case1_steps_never_regress(x0 in 0.05f64..0.6, a in 0.05f64..2.0, b in 0.05f64..2.0) {
        let car = car_model(0.3, 0.01).unwrap();
        let x0 = Vector::from_element(1, x0);
        let theta = ParamVector::rates(&[a, b]);
        prop_assume!(rollout(&car, &x0, 0.0, &theta, 10).unwrap().is_complete());
        let step = update_feasible(&car, &x0, 0.0, &theta, 10, &RfggdConfig::default()).unwrap();
        prop_assert!(step.trace_after.feasible_steps() >= 10);
        prop_assert!(step.objective_after >= step.objective_before);
    }
}

#[test]
fn zero_gradient_is_a_fixed_point() {
    // a single step from the lower wall with a = 1 pins u at 1 regardless of b
    let car = car_model(0.3, 0.01).unwrap();
    let theta = ParamVector::rates(&[1.0, 0.5]);
    let step = update_feasible(&car, &Vector::from_element(1, 0.0), 0.0, &theta, 1, &RfggdConfig::default()).unwrap();
    assert_eq!(step.params, theta);
    assert_eq!(step.status, UpdateStatus::NoChange);
}

#[test]
fn feasible_to_cap_needs_no_case2_iterations() {
    let car = car_model(0.3, 0.01).unwrap();
    let theta = ParamVector::rates(&[0.05, 0.5]);
    let out = update_infeasible(&car, &Vector::from_element(1, 0.1), 0.0, &theta, &car_cfg()).unwrap();
    assert_eq!(out.status, Case2Status::AlreadyFeasible);
    assert_eq!(out.iterations, 0);
    assert_eq!(out.params, theta);
}

#[test]
fn case2_extends_the_horizon() {
    let car = car_model(0.3, 0.01).unwrap();
    let out = update_infeasible(&car, &Vector::from_element(1, 0.1), 0.0, &ParamVector::rates(&[0.01, 0.01]), &car_cfg()).unwrap();
    assert_eq!(out.status, Case2Status::Extended);
    assert!(out.feasibility_history.last() > out.feasibility_history.first());
}

#[test]
fn limiting_row_matches_scan() {
    // the car QP has one decision variable, so the relaxation can be scanned
    let car = car_model(0.3, 0.01).unwrap();
    for (x0, a, b) in [(0.1, 0.01, 0.01), (0.5, 0.003, 0.02), (0.3, 0.02, 0.004)] {
        let theta = ParamVector::rates(&[a, b]);
        let tr = rollout(&car, &Vector::from_element(1, x0), 0.0, &theta, 100).unwrap();
        let row = limiting_ascent(&car, &tr).unwrap().row;
        let k = tr.feasible_steps();
        let (qp, _) = rfggd_core::plant::build_qp(&car, tr.time(k), &tr.states[k], &theta).unwrap();
        let slack = |u: f64| qp.w() - qp.g().column(0) * u;
        let cost = |u: f64| slack(u).map(|s| s.max(0.0)).norm_squared();
        let (mut lo, mut hi) = (-1e4, 1e4);
        for _ in 0..300 {
            let (m1, m2) = (lo + (hi - lo) / 3.0, hi - (hi - lo) / 3.0);
            if cost(m1) < cost(m2) { hi = m2 } else { lo = m1 }
        }
        let s = slack(0.5 * (lo + hi));
        // ties within the solver tolerance go to the lower index
        let scan = if s[0] >= s[1] - 1e-9 { 0 } else { 1 };
        assert_eq!(row, scan, "case ({x0}, {a}, {b}) slacks {s:?}");
        let rel = min_relaxation(&qp).unwrap();
        assert!((rel.max_slack() - s.max()).abs() < 1e-8);
    }
}

#[test]
fn zero_learning_rate_reproduces_fixed_parameters() {
    let uni = unicycle_model(UnicycleConfig::default()).unwrap();
    let x0 = Vector::from_vec(vec![0.0, 0.0, 0.0]);
    let theta = ParamVector::with_clf(0.5, &[0.5, 0.5, 0.5]);
    let cfg = RfggdConfig { learning_rate: 0.0, ..RfggdConfig::default() };
    let run = online_adapt(&uni, &x0, &theta, 40, &cfg).unwrap();
    assert!(run.params.iter().all(|p| *p == theta));
    // replay the same policy directly
    let mut x = x0.clone();
    for (k, u) in run.inputs.iter().enumerate() {
        let t = k as f64 * uni.dt();
        let (qp, _) = rfggd_core::plant::build_qp(&uni, t, &x, &theta).unwrap();
        let s = rfggd_core::qp::solve(&qp, rfggd_core::qp::DEFAULT_TOL);
        assert_eq!(s.z.rows(0, 2).into_owned(), *u);
        x = uni.step(t, &x, u).unwrap().next;
        assert_eq!(x, run.states[k + 1]);
    }
}

#[test]
fn bundle_from_complete_trace_has_gradient() {
    let car = car_model(0.3, 0.01).unwrap();
    let tr = rollout(&car, &Vector::from_element(1, 0.1), 0.0, &ParamVector::rates(&[0.05, 0.5]), 10).unwrap();
    let b = grad_margins(&tr);
    assert_eq!(b.steps(), 10);
    assert_eq!(b.n_params(), 2);
    assert!(b.grad_objective.is_some());
}
