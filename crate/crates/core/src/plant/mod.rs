//! Plant models and per-step QP assembly.
//!
//! A plant is control-affine in discrete time, `x+ = f_d(t, x) + g_d(t, x) u`,
//! and carries barrier functions `h_i(t, x)`, an optional Lyapunov function
//! `V(t, x)` and a stage reward. [`build_qp`] turns a plant, a state and a
//! parameter vector into the controller QP over `z = (u, delta)`:
//!
//! ```text
//!   min  (u - u_d)' P (u - u_d) + Q delta^2
//!   s.t. h_i + grad h_i'(f_d + g_d u - x) + dt dh_i/dt - (1 - a_i) h_i >= 0
//!        -(V + grad V'(f_d + g_d u - x) + dt dV/dt) + (1 - a_0) V + delta >= 0
//! ```
//!
//! Barrier rows come first, in barrier order, followed by the CLF row.
//! `delta` is present only when the plant has a Lyapunov function.

mod car;
mod unicycle;

use alloc::vec;
use alloc::vec::Vec;


use crate::error::{check_dim, Error, Result};
use crate::linalg::{all_finite, Mat, Vector};
use crate::qp::QpProblem;
use crate::qp_diff::{Perturbation, StructuralGradients};

pub use car::{car_model, CarModel};
pub use unicycle::{unicycle_model, LeaderTrajectory, UnicycleConfig, UnicycleModel};

/// A scalar function of `(t, x)` with the derivatives needed to build and
/// differentiate a QP row.
#[derive(Debug, Clone, PartialEq)]
pub struct ScalarEval {
    pub value: f64,
    /// `d/dx`
    pub grad: Vector,
    /// `d/dt`
    pub time_deriv: f64,
    /// `d^2/dx^2`
    pub hessian: Mat,
    /// `d^2/(dt dx)`
    pub time_grad: Vector,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StepEval {
    pub next: Vector,
    /// `dx+/dx`
    pub d_state: Mat,
    /// `dx+/du`
    pub d_input: Mat,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RewardEval {
    pub value: f64,
    pub d_state: Vector,
    pub d_input: Vector,
}

pub trait PlantModel {
    fn state_dim(&self) -> usize;
    fn input_dim(&self) -> usize;
    fn barrier_count(&self) -> usize;
    fn has_lyapunov(&self) -> bool;
    /// Sampling period in seconds.
    fn dt(&self) -> f64;

    /// `f_d(t, x)` and its state Jacobian.
    fn drift(&self, t: f64, x: &Vector) -> Result<(Vector, Mat)>;
    /// `g_d(t, x)` and `d g_d / d x_k` for every state coordinate `k`.
    fn input_matrix(&self, t: f64, x: &Vector) -> Result<(Mat, Vec<Mat>)>;
    fn barrier(&self, i: usize, t: f64, x: &Vector) -> Result<ScalarEval>;
    fn lyapunov(&self, t: f64, x: &Vector) -> Result<Option<ScalarEval>>;
    fn reward(&self, t: f64, x: &Vector, u: &Vector) -> Result<RewardEval>;
    /// Input cost `P`, positive definite.
    fn input_weight(&self) -> Mat;
    /// CLF slack weight `Q`.
    fn slack_weight(&self) -> f64;

    fn step(&self, t: f64, x: &Vector, u: &Vector) -> Result<StepEval> {
        check_dim("input", self.input_dim(), u.len())?;
        let (fd, jf) = self.drift(t, x)?;
        let (gd, dg) = self.input_matrix(t, x)?;
        let next = fd + &gd * u;
        let mut d_state = jf;
        for (k, dgk) in dg.iter().enumerate() {
            let col = dgk * u;
            let mut c = d_state.column_mut(k);
            c += col;
        }
        Ok(StepEval {
            next,
            d_state,
            d_input: gd,
        })
    }
}

/// Bounds applied to every class-K rate after each update.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RateBox {
    pub min: f64,
    pub max: f64,
}

impl Default for RateBox {
    fn default() -> Self {
        Self { min: 1e-3, max: 5.0 }
    }
}

impl RateBox {
    pub fn contains(&self, v: f64) -> bool {
        v >= self.min && v <= self.max
    }

    pub fn clip(&self, v: f64) -> f64 {
        v.max(self.min).min(self.max)
    }
}

/// Controller parameters, flattened as `[u_d, a_0, a_1, .., a_N]`.
#[derive(Debug, Clone, PartialEq)]
pub struct ParamVector {
    pub nominal_input: Option<Vector>,
    pub clf_rate: Option<f64>,
    pub cbf_rates: Vec<f64>,
}

impl ParamVector {
    pub fn rates(cbf_rates: &[f64]) -> Self {
        Self {
            nominal_input: None,
            clf_rate: None,
            cbf_rates: cbf_rates.to_vec(),
        }
    }

    pub fn with_clf(clf_rate: f64, cbf_rates: &[f64]) -> Self {
        Self {
            nominal_input: None,
            clf_rate: Some(clf_rate),
            cbf_rates: cbf_rates.to_vec(),
        }
    }

    pub fn len(&self) -> usize {
        self.nominal_len() + usize::from(self.clf_rate.is_some()) + self.cbf_rates.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn nominal_len(&self) -> usize {
        self.nominal_input.as_ref().map_or(0, |u| u.len())
    }

    pub fn clf_index(&self) -> Option<usize> {
        self.clf_rate.map(|_| self.nominal_len())
    }

    pub fn cbf_index(&self, i: usize) -> usize {
        self.nominal_len() + usize::from(self.clf_rate.is_some()) + i
    }

    pub fn to_vector(&self) -> Vector {
        let mut v = Vec::with_capacity(self.len());
        if let Some(u) = &self.nominal_input {
            v.extend(u.iter().copied());
        }
        v.extend(self.clf_rate);
        v.extend(self.cbf_rates.iter().copied());
        Vector::from_vec(v)
    }

    /// Same layout, new values.
    pub fn with_values(&self, v: &Vector) -> Result<Self> {
        check_dim("parameter vector", self.len(), v.len())?;
        let nl = self.nominal_len();
        let nominal_input = self
            .nominal_input
            .as_ref()
            .map(|_| v.rows(0, nl).into_owned());
        let clf_rate = self.clf_index().map(|i| v[i]);
        let cbf_rates = (0..self.cbf_rates.len())
            .map(|i| v[self.cbf_index(i)])
            .collect();
        Ok(Self {
            nominal_input,
            clf_rate,
            cbf_rates,
        })
    }

    /// Clip every rate into `bounds`; the nominal input is left alone.
    pub fn clipped(&self, bounds: &RateBox) -> Self {
        Self {
            nominal_input: self.nominal_input.clone(),
            clf_rate: self.clf_rate.map(|a| bounds.clip(a)),
            cbf_rates: self.cbf_rates.iter().map(|a| bounds.clip(*a)).collect(),
        }
    }

    pub fn rates_within(&self, bounds: &RateBox) -> bool {
        self.clf_rate.iter().chain(&self.cbf_rates).all(|a| bounds.contains(*a))
    }

    /// Checks that the layout matches what `model` expects.
    pub fn validate_for<M: PlantModel + ?Sized>(&self, model: &M) -> Result<()> {
        check_dim("barrier rates", model.barrier_count(), self.cbf_rates.len())?;
        if model.has_lyapunov() != self.clf_rate.is_some() {
            return Err(Error::InvalidInput(
                "clf rate must be given exactly when the plant has a Lyapunov function",
            ));
        }
        if let Some(u) = &self.nominal_input {
            check_dim("nominal input", model.input_dim(), u.len())?;
        }
        if !all_finite(self.to_vector().iter()) {
            return Err(Error::InvalidInput("parameters must be finite"));
        }
        Ok(())
    }
}

/// Number of QP decision variables for `model`: inputs plus the CLF slack.
pub fn decision_dim<M: PlantModel + ?Sized>(model: &M) -> usize {
    model.input_dim() + usize::from(model.has_lyapunov())
}

/// Number of QP rows for `model`.
pub fn row_count<M: PlantModel + ?Sized>(model: &M) -> usize {
    model.barrier_count() + usize::from(model.has_lyapunov())
}

/// Assemble the controller QP at `(t, x)` together with the derivatives of
/// its data with respect to `x` and the flattened parameters.
pub fn build_qp<M: PlantModel + ?Sized>(
    model: &M,
    t: f64,
    x: &Vector,
    theta: &ParamVector,
) -> Result<(QpProblem, StructuralGradients)> {
    theta.validate_for(model)?;
    let (nx, nu) = (model.state_dim(), model.input_dim());
    check_dim("state", nx, x.len())?;
    if !all_finite(x.iter()) {
        return Err(Error::InvalidInput("state must be finite"));
    }
    let nz = decision_dim(model);
    let m = row_count(model);
    let ntheta = theta.len();
    let dt = model.dt();

    let (fd, jf) = model.drift(t, x)?;
    let (gd, dg) = model.input_matrix(t, x)?;
    check_dim("drift", nx, fd.len())?;
    check_dim("input matrix rows", nx, gd.nrows())?;
    check_dim("input matrix cols", nu, gd.ncols())?;
    check_dim("input matrix derivatives", nx, dg.len())?;
    let drift_gap = &fd - x;

    let mut g = Mat::zeros(m, nz);
    let mut w = Vector::zeros(m);
    let mut wrt_state = vec![Perturbation::zeros(nz, m); nx];
    let mut wrt_params = vec![Perturbation::zeros(nz, m); ntheta];

    let mut rows: Vec<(ScalarEval, f64, f64, Option<usize>)> = Vec::with_capacity(m);
    for i in 0..model.barrier_count() {
        let h = model.barrier(i, t, x)?;
        rows.push((h, 1.0, theta.cbf_rates[i], Some(theta.cbf_index(i))));
    }
    if let Some(v) = model.lyapunov(t, x)? {
        let a0 = theta.clf_rate.expect("validated above");
        rows.push((v, -1.0, a0, theta.clf_index()));
    }

    for (r, (phi, sign, rate, rate_index)) in rows.iter().enumerate() {
        if !(phi.value.is_finite() && all_finite(phi.grad.iter()) && phi.time_deriv.is_finite()) {
            return Err(Error::Domain("non-finite barrier or Lyapunov value"));
        }
        let gu = gd.transpose() * &phi.grad * *sign;
        for c in 0..nu {
            g[(r, c)] = gu[c];
        }
        if *sign < 0.0 {
            g[(r, nu)] = 1.0;
        }
        w[r] = -sign * (rate * phi.value + phi.grad.dot(&drift_gap) + dt * phi.time_deriv);

        for k in 0..nx {
            let hess_col = phi.hessian.column(k);
            let dgu = (dg[k].transpose() * &phi.grad + gd.transpose() * hess_col) * *sign;
            let pert = &mut wrt_state[k];
            for c in 0..nu {
                pert.dg[(r, c)] = dgu[c];
            }
            let mut jf_col = jf.column(k).into_owned();
            jf_col[k] -= 1.0;
            pert.dw[r] = -sign
                * (rate * phi.grad[k]
                    + hess_col.dot(&drift_gap)
                    + phi.grad.dot(&jf_col)
                    + dt * phi.time_grad[k]);
        }
        if let Some(j) = rate_index {
            wrt_params[*j].dw[r] = -sign * phi.value;
        }
    }

    let p = model.input_weight();
    let mut h = Mat::zeros(nz, nz);
    h.view_mut((0, 0), (nu, nu)).copy_from(&(&p * 2.0));
    if model.has_lyapunov() {
        h[(nu, nu)] = 2.0 * model.slack_weight();
    }
    let mut f = Vector::zeros(nz);
    if let Some(ud) = &theta.nominal_input {
        let lin = &p * ud * -2.0;
        f.rows_mut(0, nu).copy_from(&lin);
        for j in 0..nu {
            for c in 0..nu {
                wrt_params[j].df[c] = -2.0 * p[(c, j)];
            }
        }
    }

    let qp = QpProblem::new(h, f, g, w)?;
    Ok((
        qp,
        StructuralGradients {
            wrt_state,
            wrt_params,
        },
    ))
}

/// Central finite-difference check helper shared by the model tests.
#[cfg(test)]
pub(crate) fn fd_gradient(f: impl Fn(&Vector) -> f64, x: &Vector, h: f64) -> Vector {
    let mut g = Vector::zeros(x.len());
    for k in 0..x.len() {
        let mut xp = x.clone();
        let mut xm = x.clone();
        xp[k] += h;
        xm[k] -= h;
        g[k] = (f(&xp) - f(&xm)) / (2.0 * h);
    }
    g
}
