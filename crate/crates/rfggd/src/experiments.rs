//! The car feasibility grid, car parameter-iterate study and the
//! leader-follower comparison.

use rayon::prelude::*;
use rfggd_core::plant::{car_model, CarModel, ParamVector, PlantModel, UnicycleModel};
use rfggd_core::rfggd::{online_adapt, update_feasible, update_infeasible, Case2Status, OnlineRun, RfggdConfig};
use rfggd_core::rollout::rollout;
use rfggd_core::{Result, Vector};

/// Evenly spaced values from `min` to `max` inclusive.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Range {
    pub min: f64,
    pub max: f64,
    pub count: usize,
}

impl Range {
    pub fn values(&self) -> Vec<f64> {
        let step = (self.max - self.min) / (self.count - 1) as f64;
        (0..self.count)
            .map(|i| if i + 1 == self.count { self.max } else { self.min + step * i as f64 })
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GridSpec {
    /// Rate of the lower-wall barrier.
    pub a: Range,
    /// Rate of the upper-wall barrier.
    pub b: Range,
    pub c: f64,
    pub dt: f64,
    pub x0: f64,
    pub horizon_cap: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GridResult {
    pub a_values: Vec<f64>,
    pub b_values: Vec<f64>,
    /// `steps[i][j]` is the feasible horizon at `(a_values[i], b_values[j])`.
    pub steps: Vec<Vec<usize>>,
    pub c: f64,
    pub dt: f64,
    pub x0: f64,
    pub horizon_cap: usize,
}

impl GridResult {
    pub fn count(&self, value: usize) -> usize {
        self.steps.iter().flatten().filter(|&&v| v == value).count()
    }

    /// True when swapping the roles of `a` and `b` changes the matrix.
    /// Only meaningful on square grids with matching axes.
    pub fn is_asymmetric(&self) -> bool {
        let n = self.steps.len();
        (0..n).any(|i| (0..n).any(|j| self.steps[i][j] != self.steps[j][i]))
    }
}

/// Number of steps the car stays feasible with fixed rates `(a, b)`.
pub fn car_feasible_steps(car: &CarModel, x0: f64, a: f64, b: f64, cap: usize) -> Result<usize> {
    let tr = rollout(car, &Vector::from_element(1, x0), 0.0, &ParamVector::rates(&[a, b]), cap)?;
    Ok(tr.feasible_steps())
}

/// Feasible horizon of every grid cell. Cells are evaluated in parallel.
pub fn car_grid(spec: &GridSpec) -> Result<GridResult> {
    let car = car_model(spec.c, spec.dt)?;
    let (a_values, b_values) = (spec.a.values(), spec.b.values());
    let nb = b_values.len();
    let flat = (0..a_values.len() * nb)
        .into_par_iter()
        .map(|k| car_feasible_steps(&car, spec.x0, a_values[k / nb], b_values[k % nb], spec.horizon_cap))
        .collect::<Result<Vec<_>>>()?;
    Ok(GridResult {
        steps: flat.chunks(nb).map(<[usize]>::to_vec).collect(),
        a_values,
        b_values,
        c: spec.c,
        dt: spec.dt,
        x0: spec.x0,
        horizon_cap: spec.horizon_cap,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Phase {
    Init,
    Case2,
    Case1,
}

impl Phase {
    pub fn as_str(self) -> &'static str {
        match self {
            Self::Init => "init",
            Self::Case2 => "case2",
            Self::Case1 => "case1",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PathPoint {
    pub iteration: usize,
    pub phase: Phase,
    pub a: f64,
    pub b: f64,
    pub feasible_steps: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PathEnd {
    ReachedCap,
    Stalled,
}

#[derive(Debug, Clone, PartialEq)]
pub struct IteratePath {
    pub init: (f64, f64),
    pub points: Vec<PathPoint>,
    /// Number of Case-2 iterations; zero when the init is feasible to the cap.
    pub case2_iterations: usize,
    pub end: PathEnd,
}

impl IteratePath {
    pub fn feasibility_curve(&self) -> impl Iterator<Item = usize> + '_ {
        self.points.iter().map(|p| p.feasible_steps)
    }
}

/// Case-2 iterations from each init until the trajectory is feasible to
/// `horizon_cap` (or stalls), followed by `case1_steps` Case-1 updates.
pub fn car_rfggd_study(
    car: &CarModel,
    x0: f64,
    inits: &[(f64, f64)],
    horizon_cap: usize,
    case1_steps: usize,
    cfg: &RfggdConfig,
) -> Result<Vec<IteratePath>> {
    let cfg = RfggdConfig {
        lookahead: horizon_cap,
        ..cfg.clone()
    };
    let x = Vector::from_element(1, x0);
    inits
        .iter()
        .map(|&(a, b)| {
            let mut theta = ParamVector::rates(&[a, b]);
            let mut points = vec![PathPoint {
                iteration: 0,
                phase: Phase::Init,
                a,
                b,
                feasible_steps: car_feasible_steps(car, x0, a, b, horizon_cap)?,
            }];
            let mut end = PathEnd::ReachedCap;
            loop {
                let out = update_infeasible(car, &x, 0.0, &theta, &cfg)?;
                for (v, steps) in out.iterates.iter().zip(&out.feasibility_history).skip(1) {
                    points.push(PathPoint {
                        iteration: points.len(),
                        phase: Phase::Case2,
                        a: v[0],
                        b: v[1],
                        feasible_steps: *steps,
                    });
                }
                theta = out.params;
                match out.status {
                    Case2Status::AlreadyFeasible => break,
                    Case2Status::Extended => {}
                    Case2Status::Stalled => {
                        end = PathEnd::Stalled;
                        break;
                    }
                }
            }
            let case2_iterations = points.len() - 1;
            if end == PathEnd::ReachedCap {
                for _ in 0..case1_steps {
                    let step = update_feasible(car, &x, 0.0, &theta, horizon_cap, &cfg)?;
                    theta = step.params;
                    points.push(PathPoint {
                        iteration: points.len(),
                        phase: Phase::Case1,
                        a: theta.cbf_rates[0],
                        b: theta.cbf_rates[1],
                        feasible_steps: step.trace_after.feasible_steps(),
                    });
                }
            }
            Ok(IteratePath {
                init: (a, b),
                points,
                case2_iterations,
                end,
            })
        })
        .collect()
}

/// Adaptive and fixed-parameter runs from the same start.
#[derive(Debug, Clone, PartialEq)]
pub struct FollowerReport {
    pub adaptive: OnlineRun,
    pub baseline: OnlineRun,
    /// Barrier values at every recorded state of each run.
    pub adaptive_barriers: Vec<[f64; 3]>,
    pub baseline_barriers: Vec<[f64; 3]>,
}

impl FollowerReport {
    pub fn min_adaptive_barrier(&self) -> f64 {
        self.adaptive_barriers
            .iter()
            .flatten()
            .fold(f64::INFINITY, |m, v| m.min(*v))
    }
}

fn barrier_trace(model: &UnicycleModel, run: &OnlineRun) -> Result<Vec<[f64; 3]>> {
    run.states
        .iter()
        .enumerate()
        .map(|(k, x)| model.barrier_values(k as f64 * model.dt(), x))
        .collect()
}

pub fn follower_study(
    model: &UnicycleModel,
    x0: &Vector,
    theta0: &ParamVector,
    sim_steps: usize,
    cfg: &RfggdConfig,
) -> Result<FollowerReport> {
    let fixed = RfggdConfig {
        learning_rate: 0.0,
        ..cfg.clone()
    };
    let (adaptive, baseline) = rayon::join(
        || online_adapt(model, x0, theta0, sim_steps, cfg),
        || online_adapt(model, x0, theta0, sim_steps, &fixed),
    );
    let (adaptive, baseline) = (adaptive?, baseline?);
    Ok(FollowerReport {
        adaptive_barriers: barrier_trace(model, &adaptive)?,
        baseline_barriers: barrier_trace(model, &baseline)?,
        adaptive,
        baseline,
    })
}
