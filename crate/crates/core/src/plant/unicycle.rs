//! Unicycle follower keeping a moving leader inside its camera field of view.
//!
//! State `(x, y, psi)`, input `(v, omega)`. With `r` the vector from the
//! follower to the leader, `s = |r|`, `b = r / s` and heading `c = (cos psi,
//! sin psi)`:
//!
//! * `h1 = s^2 - s_min^2`
//! * `h2 = s_max^2 - s^2`
//! * `h3 = <c, b> - cos(gamma)`
//! * `V = (s - s_d)^2`
//!
//! The stage reward is the soft minimum of the three barriers.

use alloc::vec;
use alloc::vec::Vec;
use core::f64::consts::PI;

use nalgebra::{Matrix2, Vector2};
#[allow(unused_imports)]
use num_traits::Float;

use crate::error::{check_dim, Error, Result};
use crate::linalg::{Mat, Vector};
use crate::plant::{PlantModel, RewardEval, ScalarEval};

const MIN_SEPARATION: f64 = 1e-9;

/// Leader moving at constant forward speed with a sinusoidal lateral velocity:
/// `v(t) = (forward_speed, lateral_amplitude * sin(lateral_frequency * t))`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LeaderTrajectory {
    pub origin: [f64; 2],
    pub forward_speed: f64,
    pub lateral_amplitude: f64,
    /// Angular frequency in rad/s.
    pub lateral_frequency: f64,
}

impl Default for LeaderTrajectory {
    fn default() -> Self {
        Self {
            origin: [0.7, 0.0],
            forward_speed: 1.0,
            lateral_amplitude: 12.0,
            lateral_frequency: 4.0 * PI,
        }
    }
}

impl LeaderTrajectory {
    /// Position and velocity at time `t`.
    pub fn at(&self, t: f64) -> ([f64; 2], [f64; 2]) {
        let w = self.lateral_frequency;
        let lateral = if w == 0.0 {
            0.0
        } else {
            self.lateral_amplitude / w * (1.0 - (w * t).cos())
        };
        let position = [
            self.origin[0] + self.forward_speed * t,
            self.origin[1] + lateral,
        ];
        let velocity = [self.forward_speed, self.lateral_amplitude * (w * t).sin()];
        (position, velocity)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct UnicycleConfig {
    pub s_min: f64,
    pub s_max: f64,
    /// Half field-of-view angle in radians.
    pub gamma: f64,
    pub s_d: f64,
    pub dt: f64,
    pub leader: LeaderTrajectory,
    /// Input cost `P` (2x2).
    pub input_weight: Mat,
    /// CLF slack weight `d`.
    pub slack_weight: f64,
    /// Sharpness of the soft-minimum reward.
    pub smooth_min_sharpness: f64,
}

impl Default for UnicycleConfig {
    fn default() -> Self {
        Self {
            s_min: 0.3,
            s_max: 2.0,
            gamma: PI / 6.0,
            s_d: 0.7,
            dt: 0.05,
            leader: LeaderTrajectory::default(),
            input_weight: Mat::identity(2, 2),
            slack_weight: 10.0,
            smooth_min_sharpness: 10.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct UnicycleModel {
    cfg: UnicycleConfig,
}

pub fn unicycle_model(cfg: UnicycleConfig) -> Result<UnicycleModel> {
    if !(cfg.s_min > 0.0 && cfg.s_min < cfg.s_d && cfg.s_d < cfg.s_max) {
        return Err(Error::InvalidInput("need 0 < s_min < s_d < s_max"));
    }
    if !(cfg.gamma > 0.0 && cfg.gamma < PI / 2.0) {
        return Err(Error::InvalidInput("need 0 < gamma < pi/2"));
    }
    if !(cfg.dt > 0.0 && cfg.dt.is_finite()) {
        return Err(Error::InvalidInput("unicycle dt must be positive"));
    }
    if !(cfg.slack_weight > 0.0) || !(cfg.smooth_min_sharpness > 0.0) {
        return Err(Error::InvalidInput("slack weight and soft-min sharpness must be positive"));
    }
    if cfg.input_weight.shape() != (2, 2)
        || (&cfg.input_weight - cfg.input_weight.transpose()).amax() > 1e-12
        || nalgebra::Cholesky::new(cfg.input_weight.clone()).is_none()
    {
        return Err(Error::InvalidInput("input weight must be a 2x2 positive-definite matrix"));
    }
    Ok(UnicycleModel { cfg })
}

/// A function of the relative position `r` and heading `psi` with first and
/// second derivatives.
struct RelativeEval {
    value: f64,
    grad_r: Vector2<f64>,
    hess_rr: Matrix2<f64>,
    d_psi: f64,
    d_psi_psi: f64,
    d_psi_grad_r: Vector2<f64>,
}

struct Geometry {
    r: Vector2<f64>,
    s: f64,
    heading: Vector2<f64>,
    normal: Vector2<f64>,
    leader_velocity: Vector2<f64>,
}

impl UnicycleModel {
    pub fn config(&self) -> &UnicycleConfig {
        &self.cfg
    }

    pub fn leader(&self) -> &LeaderTrajectory {
        &self.cfg.leader
    }

    fn geometry(&self, t: f64, x: &Vector) -> Result<Geometry> {
        check_dim("unicycle state", 3, x.len())?;
        let (pos, vel) = self.cfg.leader.at(t);
        let r = Vector2::new(pos[0] - x[0], pos[1] - x[1]);
        let s = r.norm();
        if !(s > MIN_SEPARATION) {
            return Err(Error::Domain("leader coincides with follower"));
        }
        let (sin, cos) = x[2].sin_cos();
        Ok(Geometry {
            r,
            s,
            heading: Vector2::new(cos, sin),
            normal: Vector2::new(-sin, cos),
            leader_velocity: Vector2::new(vel[0], vel[1]),
        })
    }

    fn relative(&self, i: usize, g: &Geometry) -> RelativeEval {
        let eye = Matrix2::identity();
        let (r, s) = (g.r, g.s);
        let zero = Vector2::zeros();
        match i {
            0 => RelativeEval {
                value: s * s - self.cfg.s_min * self.cfg.s_min,
                grad_r: r * 2.0,
                hess_rr: eye * 2.0,
                d_psi: 0.0,
                d_psi_psi: 0.0,
                d_psi_grad_r: zero,
            },
            1 => RelativeEval {
                value: self.cfg.s_max * self.cfg.s_max - s * s,
                grad_r: r * -2.0,
                hess_rr: eye * -2.0,
                d_psi: 0.0,
                d_psi_psi: 0.0,
                d_psi_grad_r: zero,
            },
            2 => {
                let c = g.heading;
                let cr = c.dot(&r);
                let s3 = s * s * s;
                let s5 = s3 * s * s;
                let nr = g.normal.dot(&r);
                RelativeEval {
                    value: cr / s - self.cfg.gamma.cos(),
                    grad_r: c / s - r * (cr / s3),
                    hess_rr: -(c * r.transpose() + r * c.transpose()) / s3 - eye * (cr / s3)
                        + r * r.transpose() * (3.0 * cr / s5),
                    d_psi: nr / s,
                    d_psi_psi: -cr / s,
                    d_psi_grad_r: g.normal / s - r * (nr / s3),
                }
            }
            // Lyapunov function
            _ => {
                let b = r / s;
                let gap = s - self.cfg.s_d;
                RelativeEval {
                    value: gap * gap,
                    grad_r: b * (2.0 * gap),
                    hess_rr: b * b.transpose() * 2.0 + (eye - b * b.transpose()) * (2.0 * gap / s),
                    d_psi: 0.0,
                    d_psi_psi: 0.0,
                    d_psi_grad_r: zero,
                }
            }
        }
    }

    /// Map derivatives in `(r, psi)` to derivatives in `(x, y, psi)` and time,
    /// using `dr/dp = -I` and `dr/dt = leader velocity`.
    fn to_state(e: RelativeEval, g: &Geometry) -> ScalarEval {
        let vl = g.leader_velocity;
        let mut hess = Mat::zeros(3, 3);
        for a in 0..2 {
            for b in 0..2 {
                hess[(a, b)] = e.hess_rr[(a, b)];
            }
            hess[(a, 2)] = -e.d_psi_grad_r[a];
            hess[(2, a)] = -e.d_psi_grad_r[a];
        }
        hess[(2, 2)] = e.d_psi_psi;
        let hv = e.hess_rr * vl;
        ScalarEval {
            value: e.value,
            grad: Vector::from_vec(vec![-e.grad_r[0], -e.grad_r[1], e.d_psi]),
            time_deriv: e.grad_r.dot(&vl),
            hessian: hess,
            time_grad: Vector::from_vec(vec![-hv[0], -hv[1], e.d_psi_grad_r.dot(&vl)]),
        }
    }

    /// All three barrier values at `(t, x)`.
    pub fn barrier_values(&self, t: f64, x: &Vector) -> Result<[f64; 3]> {
        let g = self.geometry(t, x)?;
        Ok([
            self.relative(0, &g).value,
            self.relative(1, &g).value,
            self.relative(2, &g).value,
        ])
    }
}

/// `-(1/k) ln sum exp(-k h_i)` and its weights `d/dh_i`.
pub(crate) fn smooth_min(values: &[f64], sharpness: f64) -> (f64, Vec<f64>) {
    let lo = values.iter().fold(f64::INFINITY, |m, v| m.min(*v));
    let exps: Vec<f64> = values.iter().map(|v| (-sharpness * (v - lo)).exp()).collect();
    let total: f64 = exps.iter().sum();
    let value = lo - total.ln() / sharpness;
    (value, exps.into_iter().map(|e| e / total).collect())
}

impl PlantModel for UnicycleModel {
    fn state_dim(&self) -> usize {
        3
    }

    fn input_dim(&self) -> usize {
        2
    }

    fn barrier_count(&self) -> usize {
        3
    }

    fn has_lyapunov(&self) -> bool {
        true
    }

    fn dt(&self) -> f64 {
        self.cfg.dt
    }

    fn drift(&self, _t: f64, x: &Vector) -> Result<(Vector, Mat)> {
        check_dim("unicycle state", 3, x.len())?;
        Ok((x.clone(), Mat::identity(3, 3)))
    }

    fn input_matrix(&self, _t: f64, x: &Vector) -> Result<(Mat, Vec<Mat>)> {
        check_dim("unicycle state", 3, x.len())?;
        let dt = self.cfg.dt;
        let (sin, cos) = x[2].sin_cos();
        let gd = Mat::from_row_slice(3, 2, &[dt * cos, 0.0, dt * sin, 0.0, 0.0, dt]);
        let dpsi = Mat::from_row_slice(3, 2, &[-dt * sin, 0.0, dt * cos, 0.0, 0.0, 0.0]);
        Ok((gd, vec![Mat::zeros(3, 2), Mat::zeros(3, 2), dpsi]))
    }

    fn barrier(&self, i: usize, t: f64, x: &Vector) -> Result<ScalarEval> {
        if i >= 3 {
            return Err(Error::InvalidInput("unicycle has three barriers"));
        }
        let g = self.geometry(t, x)?;
        Ok(Self::to_state(self.relative(i, &g), &g))
    }

    fn lyapunov(&self, t: f64, x: &Vector) -> Result<Option<ScalarEval>> {
        let g = self.geometry(t, x)?;
        Ok(Some(Self::to_state(self.relative(3, &g), &g)))
    }

    fn reward(&self, t: f64, x: &Vector, u: &Vector) -> Result<RewardEval> {
        check_dim("unicycle input", 2, u.len())?;
        let g = self.geometry(t, x)?;
        let evals: Vec<ScalarEval> = (0..3)
            .map(|i| Self::to_state(self.relative(i, &g), &g))
            .collect();
        let values: Vec<f64> = evals.iter().map(|e| e.value).collect();
        let (value, weights) = smooth_min(&values, self.cfg.smooth_min_sharpness);
        let mut d_state = Vector::zeros(3);
        for (e, wgt) in evals.iter().zip(weights) {
            d_state.axpy(wgt, &e.grad, 1.0);
        }
        Ok(RewardEval {
            value,
            d_state,
            d_input: Vector::zeros(2),
        })
    }

    fn input_weight(&self) -> Mat {
        self.cfg.input_weight.clone()
    }

    fn slack_weight(&self) -> f64 {
        self.cfg.slack_weight
    }
}
