use rfggd_core::plant::{car_model, unicycle_model, ParamVector, PlantModel, UnicycleConfig};
use rfggd_core::rollout::{grad_margins, grad_objective, rollout, RolloutTrace};
use rfggd_core::Vector;

fn perturbed(theta: &ParamVector, j: usize, h: f64) -> ParamVector {
    let mut v = theta.to_vector();
    v[j] += h;
    theta.with_values(&v).unwrap()
}

fn check_against_fd<M: PlantModel>(model: &M, x0: &Vector, t0: f64, theta: &ParamVector, horizon: usize, tol: f64) {
    let base = rollout(model, x0, t0, theta, horizon).unwrap();
    assert!(base.is_complete());
    assert!(!base.has_degeneracy());
    let g = grad_objective(&base).unwrap();
    let bundle = grad_margins(&base);
    let h = 1e-6;
    let roll = |th: &ParamVector| -> RolloutTrace { rollout(model, x0, t0, th, horizon).unwrap() };
    for j in 0..theta.len() {
        let (p, m) = (roll(&perturbed(theta, j, h)), roll(&perturbed(theta, j, -h)));
        let fd = (p.objective() - m.objective()) / (2.0 * h);
        assert!((g[j] - fd).abs() <= tol * fd.abs().max(1e-3), "objective {j}: {} vs {fd}", g[j]);
        for k in 0..base.feasible_steps() {
            let fd = (&p.steps[k].margins - &m.steps[k].margins) / (2.0 * h);
            for r in 0..fd.len() {
                let a = bundle.margin_grads[k][(r, j)];
                assert!((a - fd[r]).abs() <= tol * fd[r].abs().max(1e-3), "margin {k},{r},{j}: {a} vs {}", fd[r]);
            }
        }
    }
}

#[test]
fn car_horizon_two_closed_form() {
    let car = car_model(0.3, 0.01).unwrap();
    let (x0, a, b) = (0.1, 0.05, 0.5);
    let tr = rollout(&car, &Vector::from_element(1, x0), 0.0, &ParamVector::rates(&[a, b]), 2).unwrap();
    let h1 = x0 / 0.01;
    let u1 = 1.0 - a * h1;
    let u2 = 1.0 - a * (1.0 - a) * h1;
    let us: Vec<f64> = tr.inputs().map(|u| u[0]).collect();
    assert!((us[0] - u1).abs() < 1e-10 && (us[1] - u2).abs() < 1e-10);
    let g = grad_objective(&tr).unwrap();
    let expected = 2.0 * u1 * h1 + 2.0 * u2 * (1.0 - 2.0 * a) * h1;
    assert!((g[0] - expected).abs() < 1e-10, "{} vs {expected}", g[0]);
    assert!(g[1].abs() < 1e-10);
}

#[test]
fn car_gradients_match_finite_differences() {
    let car = car_model(0.3, 0.01).unwrap();
    check_against_fd(&car, &Vector::from_element(1, 0.1), 0.0, &ParamVector::rates(&[0.05, 0.5]), 10, 1e-4);
    check_against_fd(&car, &Vector::from_element(1, 0.5), 0.0, &ParamVector::rates(&[0.3, 0.2]), 10, 1e-4);
}

#[test]
fn unicycle_gradients_match_finite_differences() {
    let uni = unicycle_model(UnicycleConfig::default()).unwrap();
    // starting at the desired spacing makes the CLF row weakly active
    let x0 = Vector::from_vec(vec![-0.3, 0.05, 0.1]);
    check_against_fd(&uni, &x0, 0.0, &ParamVector::with_clf(0.5, &[0.5, 0.5, 0.5]), 10, 1e-3);
}

#[test]
fn nominal_input_is_differentiable() {
    let car = car_model(0.3, 0.01).unwrap();
    let mut theta = ParamVector::rates(&[0.05, 0.5]);
    theta.nominal_input = Some(Vector::from_element(1, 2.0));
    check_against_fd(&car, &Vector::from_element(1, 0.3), 0.0, &theta, 10, 1e-4);
}
