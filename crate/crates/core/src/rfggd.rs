//! Recursive-feasibility-guided parameter updates.
//!
//! * Case 1 ([`update_feasible`]): the parameters keep the QP solvable over
//!   the horizon. The objective gradient is projected onto the directions that
//!   keep every linearized margin nonnegative, and the step is accepted only
//!   after a re-simulation confirms that feasibility and the objective did not
//!   regress (halving the step otherwise).
//! * Case 2 ([`update_infeasible`]): the QP fails at step `T + 1`. The row
//!   needing the largest slack there is raised along its parameter gradient,
//!   projected against the margins of steps `1..T`, until the trajectory
//!   stays feasible for longer.
//!
//! Directions solve
//!
//! ```text
//!   max  <a, d> - rho/2 |d|^2
//!   s.t. e_ti + <grad e_ti, d> >= 0   for every step t and row i
//!        |d|_inf <= trust_radius
//! ```

use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::linalg::{inf_norm, Mat, Vector};
use crate::plant::{build_qp, ParamVector, PlantModel, RateBox};
use crate::qp::{solve, solve_from, QpProblem, QpStatus, RelaxationReport, DEFAULT_TOL};
use crate::rollout::{grad_margins, rollout, GradientBundle, RolloutTrace, Termination};

#[derive(Debug, Clone, PartialEq)]
pub struct RfggdConfig {
    /// Step length `beta` applied to the direction.
    pub learning_rate: f64,
    /// Infinity-norm bound on the direction.
    pub trust_radius: f64,
    /// Weight `rho` of the quadratic term of the direction problem.
    pub regularization: f64,
    pub max_case2_iters: usize,
    /// Number of step halvings tried before giving up on an update.
    pub max_backtracks: usize,
    pub rate_box: RateBox,
    /// Horizon of the rollouts used for gradients and acceptance tests.
    pub lookahead: usize,
}

impl Default for RfggdConfig {
    fn default() -> Self {
        Self {
            learning_rate: 1.0,
            trust_radius: 0.5,
            regularization: 1.0,
            max_case2_iters: 50,
            max_backtracks: 10,
            rate_box: RateBox::default(),
            lookahead: 10,
        }
    }
}

impl RfggdConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate >= 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::InvalidInput("learning rate must be finite and nonnegative"));
        }
        if !(self.trust_radius > 0.0) {
            return Err(Error::InvalidInput("trust radius must be positive"));
        }
        if !(self.regularization >= 0.0 && self.regularization.is_finite()) {
            return Err(Error::InvalidInput("regularization must be finite and nonnegative"));
        }
        if !(self.rate_box.min > 0.0 && self.rate_box.min < self.rate_box.max) {
            return Err(Error::InvalidInput("rate box must satisfy 0 < min < max"));
        }
        if self.lookahead == 0 {
            return Err(Error::InvalidInput("lookahead must be at least 1"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DirectionResult {
    pub d_theta: Vector,
    /// `e + <grad e, d>` per step and row.
    pub predicted_margins: Vec<Vector>,
    /// `<ascent, d>`.
    pub objective_projection: f64,
    pub solver_status: QpStatus,
}

impl DirectionResult {
    fn zero(bundle: &GradientBundle, n: usize) -> Self {
        Self {
            d_theta: Vector::zeros(n),
            predicted_margins: bundle
                .margin_values
                .iter()
                .map(|e| e.map(|v| v.max(0.0)))
                .collect(),
            objective_projection: 0.0,
            solver_status: QpStatus::Optimal,
        }
    }

    pub fn is_zero(&self) -> bool {
        inf_norm(&self.d_theta) <= 1e-12
    }
}

/// Best ascent direction that keeps every linearized margin nonnegative.
///
/// Margins are floored at zero first so that `d = 0` is always admissible;
/// rows that cannot reach zero anywhere inside the trust box are dropped.
pub fn feasible_direction(
    bundle: &GradientBundle,
    ascent: &Vector,
    cfg: &RfggdConfig,
) -> Result<DirectionResult> {
    let n = ascent.len();
    if bundle.steps() > 0 && bundle.n_params() != n {
        return Err(Error::DimensionMismatch {
            what: "ascent direction",
            expected: bundle.n_params(),
            found: n,
        });
    }
    if inf_norm(ascent) == 0.0 {
        return Ok(DirectionResult::zero(bundle, n));
    }
    let radius = cfg.trust_radius;
    let mut rows: Vec<(Vector, f64)> = Vec::new();
    for (e, grad) in bundle.margin_values.iter().zip(&bundle.margin_grads) {
        for i in 0..e.len() {
            let gi = grad.row(i).transpose();
            let value = e[i].max(0.0);
            let reach = if radius.is_finite() {
                gi.lp_norm(1) * radius
            } else if inf_norm(&gi) > 0.0 {
                f64::INFINITY
            } else {
                0.0
            };
            if value - reach < 0.0 && inf_norm(&gi) > 1e-12 {
                rows.push((gi, value));
            }
        }
    }
    let box_rows = if radius.is_finite() { 2 * n } else { 0 };
    let m = rows.len() + box_rows;
    let mut g = Mat::zeros(m, n);
    let mut w = Vector::zeros(m);
    for (r, (gi, value)) in rows.iter().enumerate() {
        g.set_row(r, &gi.transpose());
        w[r] = -value;
    }
    if radius.is_finite() {
        for j in 0..n {
            let r = rows.len() + 2 * j;
            g[(r, j)] = 1.0;
            g[(r + 1, j)] = -1.0;
            w[r] = -radius;
            w[r + 1] = -radius;
        }
    }
    let h = Mat::identity(n, n) * cfg.regularization;
    let qp = QpProblem::new(h, -ascent, g, w)?;
    let sol = solve_from(&qp, &Vector::zeros(n), DEFAULT_TOL);
    if sol.status != QpStatus::Optimal {
        return Err(Error::NumericalFailure("direction QP"));
    }
    let d = sol.z;
    let predicted_margins = bundle
        .margin_values
        .iter()
        .zip(&bundle.margin_grads)
        .map(|(e, grad)| e.map(|v| v.max(0.0)) + grad * &d)
        .collect();
    Ok(DirectionResult {
        objective_projection: ascent.dot(&d),
        d_theta: d,
        predicted_margins,
        solver_status: sol.status,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum UpdateStatus {
    /// A step of the given length passed the re-simulation test.
    Accepted { step_size: f64 },
    /// Direction is zero, or clipping removed the whole step.
    NoChange,
    /// Every trial step failed the re-simulation test; parameters unchanged.
    BacktrackExhausted,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Case1Step {
    pub params: ParamVector,
    pub direction: DirectionResult,
    pub status: UpdateStatus,
    pub objective_before: f64,
    pub objective_after: f64,
    pub trace_before: RolloutTrace,
    /// Trace under `params`.
    pub trace_after: RolloutTrace,
}

impl Case1Step {
    pub fn improved(&self) -> bool {
        self.objective_after > self.objective_before
    }
}

fn candidate(theta: &ParamVector, d: &Vector, step: f64, bounds: &RateBox) -> Result<ParamVector> {
    let v = theta.to_vector() + d * step;
    Ok(theta.with_values(&v)?.clipped(bounds))
}

/// One Case-1 update from a parameter that is feasible over `horizon`.
pub fn update_feasible<M: PlantModel + ?Sized>(
    model: &M,
    x0: &Vector,
    t0: f64,
    theta: &ParamVector,
    horizon: usize,
    cfg: &RfggdConfig,
) -> Result<Case1Step> {
    cfg.validate()?;
    let before = rollout(model, x0, t0, theta, horizon)?;
    if !before.is_complete() {
        return Err(Error::TraceNotFeasible {
            feasible_steps: before.feasible_steps(),
            horizon,
        });
    }
    let bundle = grad_margins(&before);
    let ascent = bundle
        .grad_objective
        .clone()
        .expect("complete trace has an objective gradient");
    let direction = feasible_direction(&bundle, &ascent, cfg)?;
    let j0 = before.objective();
    let unchanged = |direction, status, before: RolloutTrace| Case1Step {
        params: theta.clone(),
        direction,
        status,
        objective_before: j0,
        objective_after: j0,
        trace_after: before.clone(),
        trace_before: before,
    };
    if direction.is_zero() || cfg.learning_rate == 0.0 {
        return Ok(unchanged(direction, UpdateStatus::NoChange, before));
    }

    let mut step = cfg.learning_rate;
    for _ in 0..=cfg.max_backtracks {
        let cand = candidate(theta, &direction.d_theta, step, &cfg.rate_box)?;
        if cand == *theta {
            return Ok(unchanged(direction, UpdateStatus::NoChange, before));
        }
        let after = rollout(model, x0, t0, &cand, horizon)?;
        if after.feasible_steps() >= horizon && after.objective() >= j0 {
            return Ok(Case1Step {
                params: cand,
                direction,
                status: UpdateStatus::Accepted { step_size: step },
                objective_before: j0,
                objective_after: after.objective(),
                trace_before: before,
                trace_after: after,
            });
        }
        step *= 0.5;
    }
    Ok(unchanged(direction, UpdateStatus::BacktrackExhausted, before))
}

/// The row that limits feasibility at the first infeasible step.
#[derive(Debug, Clone, PartialEq)]
pub struct LimitingRow {
    pub row: usize,
    pub slack: f64,
    /// Gradient of the row margin at the relaxed solution, through `D_{T+1}`.
    pub ascent: Vector,
    pub report: RelaxationReport,
}

/// Identify the limiting row of an infeasible trace and its ascent direction.
pub fn limiting_ascent<M: PlantModel + ?Sized>(model: &M, trace: &RolloutTrace) -> Result<LimitingRow> {
    let report = relaxation_of(trace)?;
    let row = report
        .limiting_index
        .ok_or(Error::InvalidInput("relaxation reports no limiting row"))?;
    row_ascent(model, trace, row)
}

fn relaxation_of(trace: &RolloutTrace) -> Result<&RelaxationReport> {
    trace
        .relaxation()
        .ok_or(Error::InvalidInput("trace does not end in an infeasible QP"))
}

/// Ascent direction of row `row` of the first infeasible QP of `trace`.
pub fn row_ascent<M: PlantModel + ?Sized>(model: &M, trace: &RolloutTrace, row: usize) -> Result<LimitingRow> {
    let report = relaxation_of(trace)?.clone();
    if row >= report.slacks.len() {
        return Err(Error::InvalidInput("row index out of range"));
    }
    let k = trace.feasible_steps();
    let x = &trace.states[k];
    let d = &trace.state_sens[k];
    let (_, grads) = build_qp(model, trace.time(k), x, &trace.params)?;
    let z = &report.relaxed_solution;
    let dx = Vector::from_fn(x.len(), |c, _| {
        grads.wrt_state[c].dg.row(row).transpose().dot(z) - grads.wrt_state[c].dw[row]
    });
    let dtheta = Vector::from_fn(grads.wrt_params.len(), |c, _| {
        grads.wrt_params[c].dg.row(row).transpose().dot(z) - grads.wrt_params[c].dw[row]
    });
    Ok(LimitingRow {
        row,
        slack: report.slacks[row],
        ascent: d.transpose() * dx + dtheta,
        report,
    })
}

/// Rows with a nonzero slack, largest slack first; the limiting row leads.
fn slack_rows(report: &RelaxationReport) -> Vec<usize> {
    let mut rows: Vec<usize> = (0..report.slacks.len())
        .filter(|&i| report.slacks[i] > 0.0 && Some(i) != report.limiting_index)
        .collect();
    rows.sort_by(|&i, &j| report.slacks[j].total_cmp(&report.slacks[i]));
    report.limiting_index.into_iter().chain(rows).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Case2Status {
    /// Feasible over the whole lookahead on entry; nothing to do.
    AlreadyFeasible,
    /// Feasibility horizon grew.
    Extended,
    /// No increase within `max_case2_iters` iterations.
    Stalled,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Case2Outcome {
    pub params: ParamVector,
    pub iterations: usize,
    /// Feasible steps of the current iterate, starting with the input.
    pub feasibility_history: Vec<usize>,
    /// Flattened parameters of every iterate, starting with the input.
    pub iterates: Vec<Vector>,
    pub status: Case2Status,
    pub trace: RolloutTrace,
}

fn case2_progress(current: &RolloutTrace, cand: &RolloutTrace) -> bool {
    let (t, tc) = (current.feasible_steps(), cand.feasible_steps());
    if tc != t {
        return tc > t;
    }
    match (current.relaxation(), cand.relaxation()) {
        (Some(a), Some(b)) => b.max_slack() < a.max_slack(),
        _ => false,
    }
}

/// Case-2 iterations with horizon cap `cfg.lookahead`. Stops as soon as the
/// feasibility horizon exceeds its initial value.
pub fn update_infeasible<M: PlantModel + ?Sized>(
    model: &M,
    x0: &Vector,
    t0: f64,
    theta: &ParamVector,
    cfg: &RfggdConfig,
) -> Result<Case2Outcome> {
    cfg.validate()?;
    let cap = cfg.lookahead;
    let mut theta = theta.clone();
    let mut trace = rollout(model, x0, t0, &theta, cap)?;
    let start = trace.feasible_steps();
    let mut outcome = Case2Outcome {
        params: theta.clone(),
        iterations: 0,
        feasibility_history: alloc::vec![start],
        iterates: alloc::vec![theta.to_vector()],
        status: Case2Status::AlreadyFeasible,
        trace: trace.clone(),
    };
    if trace.is_complete() {
        return Ok(outcome);
    }
    for iter in 1..=cfg.max_case2_iters {
        if let Termination::Failed(e) = &trace.termination {
            return Err(e.clone());
        }
        // The limiting row goes first. Rows tied with it, or close behind,
        // are tried as well; a longer horizon from any row wins over a
        // smaller slack at the same horizon.
        let bundle = grad_margins(&trace);
        let rows = slack_rows(relaxation_of(&trace)?);
        let mut fallback: Option<(ParamVector, RolloutTrace)> = None;
        'rows: for row in rows {
            let ascent = row_ascent(model, &trace, row)?.ascent;
            let direction = feasible_direction(&bundle, &ascent, cfg)?;
            if direction.is_zero() || cfg.learning_rate == 0.0 {
                continue;
            }
            let mut step = cfg.learning_rate;
            for _ in 0..=cfg.max_backtracks {
                let cand = candidate(&theta, &direction.d_theta, step, &cfg.rate_box)?;
                if cand == theta {
                    break;
                }
                let cand_trace = rollout(model, x0, t0, &cand, cap)?;
                if case2_progress(&trace, &cand_trace) {
                    if cand_trace.feasible_steps() > trace.feasible_steps() {
                        fallback = Some((cand, cand_trace));
                        break 'rows;
                    }
                    if fallback.is_none() {
                        fallback = Some((cand, cand_trace));
                    }
                    break;
                }
                step *= 0.5;
            }
        }
        if let Some((cand, cand_trace)) = fallback {
            theta = cand;
            trace = cand_trace;
        }
        outcome.iterations = iter;
        outcome.feasibility_history.push(trace.feasible_steps());
        outcome.iterates.push(theta.to_vector());
        if trace.feasible_steps() > start {
            outcome.status = Case2Status::Extended;
            outcome.params = theta;
            outcome.trace = trace;
            return Ok(outcome);
        }
    }
    outcome.status = Case2Status::Stalled;
    outcome.params = theta;
    outcome.trace = trace;
    Ok(outcome)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum StepNote {
    /// Adaptation disabled.
    Fixed,
    Case1(UpdateStatus),
    Case2(Case2Status),
    /// Lookahead rollout failed numerically; parameters kept.
    RolloutFailed,
}

#[derive(Debug, Clone, PartialEq)]
pub enum OnlineTermination {
    Completed,
    /// The controller QP at the real state had no solution at this step.
    Infeasible { step: usize },
    Failed { step: usize, error: Error },
}

/// Closed-loop run with one parameter update per sampling instant.
#[derive(Debug, Clone, PartialEq)]
pub struct OnlineRun {
    pub times: Vec<f64>,
    /// `x_0 .. x_K`, one more than `inputs`.
    pub states: Vec<Vector>,
    pub inputs: Vec<Vector>,
    /// Parameters used to compute each input.
    pub params: Vec<ParamVector>,
    /// Lookahead objective under the parameters of each step.
    pub horizon_objective: Vec<f64>,
    /// Stage reward at each step.
    pub rewards: Vec<f64>,
    pub notes: Vec<StepNote>,
    pub termination: OnlineTermination,
}

impl OnlineRun {
    pub fn total_horizon_objective(&self) -> f64 {
        self.horizon_objective.iter().sum()
    }
}

/// Run `sim_steps` steps from `x0` at `t = 0`: update the parameters with a
/// single Case-1 step (or Case-2 when the lookahead is infeasible), then apply
/// the first input of the updated controller. A zero learning rate keeps the
/// parameters fixed.
pub fn online_adapt<M: PlantModel + ?Sized>(
    model: &M,
    x0: &Vector,
    theta0: &ParamVector,
    sim_steps: usize,
    cfg: &RfggdConfig,
) -> Result<OnlineRun> {
    cfg.validate()?;
    theta0.validate_for(model)?;
    let nu = model.input_dim();
    let mut run = OnlineRun {
        times: Vec::with_capacity(sim_steps),
        states: alloc::vec![x0.clone()],
        inputs: Vec::with_capacity(sim_steps),
        params: Vec::with_capacity(sim_steps),
        horizon_objective: Vec::with_capacity(sim_steps),
        rewards: Vec::with_capacity(sim_steps),
        notes: Vec::with_capacity(sim_steps),
        termination: OnlineTermination::Completed,
    };
    let mut theta = theta0.clone();
    for k in 0..sim_steps {
        let t = k as f64 * model.dt();
        let x = run.states[k].clone();
        let lookahead = match rollout(model, &x, t, &theta, cfg.lookahead) {
            Ok(tr) => tr,
            Err(error) => {
                run.termination = OnlineTermination::Failed { step: k, error };
                break;
            }
        };
        let (note, objective) = if cfg.learning_rate == 0.0 {
            (StepNote::Fixed, lookahead.objective())
        } else {
            match &lookahead.termination {
                Termination::Horizon => {
                    let upd = update_feasible(model, &x, t, &theta, cfg.lookahead, cfg)?;
                    theta = upd.params.clone();
                    (StepNote::Case1(upd.status), upd.objective_after)
                }
                Termination::Infeasible(_) => {
                    let upd = update_infeasible(model, &x, t, &theta, cfg)?;
                    theta = upd.params.clone();
                    (StepNote::Case2(upd.status), upd.trace.objective())
                }
                Termination::Failed(_) => (StepNote::RolloutFailed, lookahead.objective()),
            }
        };

        let (qp, _) = match build_qp(model, t, &x, &theta) {
            Ok(q) => q,
            Err(error) => {
                run.termination = OnlineTermination::Failed { step: k, error };
                break;
            }
        };
        let sol = solve(&qp, DEFAULT_TOL);
        match sol.status {
            QpStatus::Optimal => {}
            QpStatus::Infeasible => {
                run.termination = OnlineTermination::Infeasible { step: k };
                break;
            }
            QpStatus::NumericalFailure => {
                run.termination = OnlineTermination::Failed {
                    step: k,
                    error: Error::NumericalFailure("controller QP"),
                };
                break;
            }
        }
        let u = sol.z.rows(0, nu).into_owned();
        let reward = model.reward(t, &x, &u)?;
        let next = model.step(t, &x, &u)?.next;
        run.times.push(t);
        run.inputs.push(u);
        run.params.push(theta.clone());
        run.horizon_objective.push(objective);
        run.rewards.push(reward.value);
        run.notes.push(note);
        run.states.push(next);
    }
    Ok(run)
}
