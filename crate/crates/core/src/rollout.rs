//! Closed-loop rollouts with forward parameter sensitivities.
//!
//! With `D_t = dx_t/dtheta` and `D_1 = 0`, every step applies
//!
//! ```text
//!   dz_t/dtheta = (dz/dx) D_t + (dz/dtheta)_direct
//!   D_{t+1}     = (dx+/dx) D_t + (dx+/du) du_t/dtheta
//! ```
//!
//! so gradients of the horizon objective and of every row margin follow from
//! quantities stored on the trace.

use alloc::vec::Vec;

use crate::error::{check_dim, Error, Result};
use crate::linalg::{all_finite, Mat, Vector};
use crate::plant::{build_qp, decision_dim, ParamVector, PlantModel};
use crate::qp::{solve, QpStatus, RelaxationReport, DEFAULT_TOL};
use crate::qp_diff::{chain_to_inputs, solution_jacobian, DegeneracyFlag, TOL_ACTIVE, TOL_DUAL};

#[derive(Debug, Clone, PartialEq)]
pub struct StepRecord {
    pub t: f64,
    /// Full QP solution `(u, delta)`.
    pub z: Vector,
    pub duals: Vector,
    /// `G z - w`, one entry per QP row.
    pub margins: Vector,
    pub active_set: Vec<usize>,
    pub flags: Vec<DegeneracyFlag>,
    pub reward: f64,
    pub reward_dx: Vector,
    pub reward_du: Vector,
    /// Total `dz/dtheta` along the trajectory.
    pub dz_dtheta: Mat,
    /// Partial of the margins in the state at fixed `z`.
    pub margin_dx: Mat,
    /// Partial of the margins in `z` (the constraint matrix).
    pub margin_dz: Mat,
    /// Direct partial of the margins in the parameters.
    pub margin_dtheta: Mat,
}

impl StepRecord {
    pub fn is_degenerate(&self) -> bool {
        self.flags.contains(&DegeneracyFlag::Degenerate)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Termination {
    /// Every step of the horizon was solved.
    Horizon,
    /// The QP after the last recorded step has no solution.
    Infeasible(RelaxationReport),
    /// Solver, differentiation or model failure after the last recorded step.
    Failed(Error),
}

#[derive(Debug, Clone, PartialEq)]
pub struct RolloutTrace {
    pub t0: f64,
    pub dt: f64,
    pub horizon: usize,
    pub params: ParamVector,
    pub n_inputs: usize,
    /// `x_1 .. x_{K+1}`.
    pub states: Vec<Vector>,
    /// `D_1 .. D_{K+1}`.
    pub state_sens: Vec<Mat>,
    /// Steps `1 .. K`.
    pub steps: Vec<StepRecord>,
    pub termination: Termination,
}

impl RolloutTrace {
    pub fn feasible_steps(&self) -> usize {
        self.steps.len()
    }

    pub fn is_complete(&self) -> bool {
        self.termination == Termination::Horizon
    }

    pub fn time(&self, k: usize) -> f64 {
        self.t0 + k as f64 * self.dt
    }

    pub fn inputs(&self) -> impl Iterator<Item = Vector> + '_ {
        self.steps.iter().map(|s| s.z.rows(0, self.n_inputs).into_owned())
    }

    /// `sum_t R(x_t, u_t)` over the recorded steps.
    pub fn objective(&self) -> f64 {
        self.steps.iter().map(|s| s.reward).sum()
    }

    pub fn has_degeneracy(&self) -> bool {
        self.steps.iter().any(StepRecord::is_degenerate)
    }

    pub fn relaxation(&self) -> Option<&RelaxationReport> {
        match &self.termination {
            Termination::Infeasible(r) => Some(r),
            _ => None,
        }
    }
}

/// Roll the closed loop forward for at most `horizon` steps from `x0` at time `t0`.
pub fn rollout<M: PlantModel + ?Sized>(
    model: &M,
    x0: &Vector,
    t0: f64,
    theta: &ParamVector,
    horizon: usize,
) -> Result<RolloutTrace> {
    let nx = model.state_dim();
    let nu = model.input_dim();
    check_dim("initial state", nx, x0.len())?;
    if !all_finite(x0.iter()) || !t0.is_finite() {
        return Err(Error::InvalidInput("initial state and time must be finite"));
    }
    if horizon == 0 {
        return Err(Error::InvalidInput("horizon must be at least 1"));
    }
    theta.validate_for(model)?;
    let ntheta = theta.len();
    let nz = decision_dim(model);

    let mut trace = RolloutTrace {
        t0,
        dt: model.dt(),
        horizon,
        params: theta.clone(),
        n_inputs: nu,
        states: alloc::vec![x0.clone()],
        state_sens: alloc::vec![Mat::zeros(nx, ntheta)],
        steps: Vec::with_capacity(horizon),
        termination: Termination::Horizon,
    };

    for k in 0..horizon {
        let t = trace.time(k);
        let x = trace.states[k].clone();
        let d = trace.state_sens[k].clone();
        match advance(model, t, &x, &d, theta, nz) {
            Ok(Advance::Stepped(record, next, next_sens)) => {
                trace.steps.push(*record);
                trace.states.push(next);
                trace.state_sens.push(next_sens);
            }
            Ok(Advance::Infeasible(report)) => {
                trace.termination = Termination::Infeasible(report);
                break;
            }
            Err(e) => {
                trace.termination = Termination::Failed(e);
                break;
            }
        }
    }
    Ok(trace)
}

enum Advance {
    Stepped(alloc::boxed::Box<StepRecord>, Vector, Mat),
    Infeasible(RelaxationReport),
}

fn advance<M: PlantModel + ?Sized>(
    model: &M,
    t: f64,
    x: &Vector,
    d: &Mat,
    theta: &ParamVector,
    nz: usize,
) -> Result<Advance> {
    let nu = model.input_dim();
    let (qp, grads) = build_qp(model, t, x, theta)?;
    let sol = solve(&qp, DEFAULT_TOL);
    match sol.status {
        QpStatus::Optimal => {}
        QpStatus::Infeasible => {
            let report = sol
                .certificate
                .ok_or(Error::NumericalFailure("infeasible QP without certificate"))?;
            return Ok(Advance::Infeasible(report));
        }
        QpStatus::NumericalFailure => return Err(Error::NumericalFailure("controller QP")),
    }
    let (jac, flags) = solution_jacobian(&qp, &sol, TOL_ACTIVE, TOL_DUAL)?;
    let sens = chain_to_inputs(&jac, &grads, nu)?;
    let dz_dtheta = &sens.dz_dx * d + &sens.dz_dtheta;
    let du_dtheta = dz_dtheta.rows(0, nu).into_owned();

    let u = sol.z.rows(0, nu).into_owned();
    let step = model.step(t, x, &u)?;
    if !all_finite(step.next.iter()) {
        return Err(Error::Domain("state left the finite range"));
    }
    let next_sens = &step.d_state * d + &step.d_input * &du_dtheta;
    let reward = model.reward(t, x, &u)?;

    let m = qp.n_cons();
    let margin_dx = Mat::from_fn(m, x.len(), |r, k| {
        grads.wrt_state[k].dg.row(r).transpose().dot(&sol.z) - grads.wrt_state[k].dw[r]
    });
    let margin_dtheta = Mat::from_fn(m, grads.wrt_params.len(), |r, j| {
        grads.wrt_params[j].dg.row(r).transpose().dot(&sol.z) - grads.wrt_params[j].dw[r]
    });
    debug_assert_eq!(sol.z.len(), nz);

    let record = StepRecord {
        t,
        margins: qp.margins(&sol.z),
        z: sol.z,
        duals: sol.duals,
        active_set: sol.active_set,
        flags,
        reward: reward.value,
        reward_dx: reward.d_state,
        reward_du: reward.d_input,
        dz_dtheta,
        margin_dx,
        margin_dz: qp.g().clone(),
        margin_dtheta,
    };
    Ok(Advance::Stepped(
        alloc::boxed::Box::new(record),
        step.next,
        next_sens,
    ))
}

/// Gradient of `sum_t R(x_t, u_t)` with respect to the flattened parameters.
pub fn grad_objective(trace: &RolloutTrace) -> Result<Vector> {
    if !trace.is_complete() {
        return Err(Error::TraceNotFeasible {
            feasible_steps: trace.feasible_steps(),
            horizon: trace.horizon,
        });
    }
    let nu = trace.n_inputs;
    let mut g = Vector::zeros(trace.params.len());
    for (k, s) in trace.steps.iter().enumerate() {
        let du = s.dz_dtheta.rows(0, nu);
        g += trace.state_sens[k].transpose() * &s.reward_dx + du.transpose() * &s.reward_du;
    }
    Ok(g)
}

/// Margins and their parameter gradients along a trace.
#[derive(Debug, Clone, PartialEq)]
pub struct GradientBundle {
    /// Present only when the trace covers its whole horizon.
    pub grad_objective: Option<Vector>,
    /// `e_t`, one vector per step.
    pub margin_values: Vec<Vector>,
    /// `d e_t / d theta`, one `rows x n_theta` matrix per step.
    pub margin_grads: Vec<Mat>,
}

impl GradientBundle {
    pub fn n_params(&self) -> usize {
        self.margin_grads
            .first()
            .map_or_else(|| self.grad_objective.as_ref().map_or(0, |g| g.len()), |m| m.ncols())
    }

    pub fn steps(&self) -> usize {
        self.margin_values.len()
    }

    /// Keep only the first `steps` steps.
    pub fn truncated(&self, steps: usize) -> Self {
        Self {
            grad_objective: self.grad_objective.clone(),
            margin_values: self.margin_values.iter().take(steps).cloned().collect(),
            margin_grads: self.margin_grads.iter().take(steps).cloned().collect(),
        }
    }
}

pub fn margin_gradient(trace: &RolloutTrace, k: usize) -> Mat {
    let s = &trace.steps[k];
    &s.margin_dx * &trace.state_sens[k] + &s.margin_dz * &s.dz_dtheta + &s.margin_dtheta
}

pub fn grad_margins(trace: &RolloutTrace) -> GradientBundle {
    GradientBundle {
        grad_objective: grad_objective(trace).ok(),
        margin_values: trace.steps.iter().map(|s| s.margins.clone()).collect(),
        margin_grads: (0..trace.steps.len())
            .map(|k| margin_gradient(trace, k))
            .collect(),
    }
}
