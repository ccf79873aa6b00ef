//! One-dimensional integrator squeezed between two vehicles.
//!
//! The safe corridor is `t <= x <= 1 + c t`, encoded as `h1 = x - t` and
//! `h2 = 1 + c t - x`. It closes at `t = 1 / (1 - c)`.

use alloc::vec;
use alloc::vec::Vec;

use crate::error::{check_dim, Error, Result};
use crate::linalg::{Mat, Vector};
use crate::plant::{PlantModel, RewardEval, ScalarEval};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CarModel {
    /// Speed of the front vehicle relative to the rear one.
    pub c: f64,
    pub dt: f64,
}

pub fn car_model(c: f64, dt: f64) -> Result<CarModel> {
    if !(c < 1.0) || !c.is_finite() {
        return Err(Error::InvalidInput("car shrinkage rate c must be finite and < 1"));
    }
    if !(dt > 0.0) || !dt.is_finite() {
        return Err(Error::InvalidInput("car dt must be positive"));
    }
    Ok(CarModel { c, dt })
}

impl CarModel {
    /// Time at which the corridor vanishes.
    pub fn closing_time(&self) -> f64 {
        1.0 / (1.0 - self.c)
    }

    fn affine(value: f64, slope_x: f64, slope_t: f64) -> ScalarEval {
        ScalarEval {
            value,
            grad: Vector::from_element(1, slope_x),
            time_deriv: slope_t,
            hessian: Mat::zeros(1, 1),
            time_grad: Vector::zeros(1),
        }
    }
}

impl PlantModel for CarModel {
    fn state_dim(&self) -> usize {
        1
    }

    fn input_dim(&self) -> usize {
        1
    }

    fn barrier_count(&self) -> usize {
        2
    }

    fn has_lyapunov(&self) -> bool {
        false
    }

    fn dt(&self) -> f64 {
        self.dt
    }

    fn drift(&self, _t: f64, x: &Vector) -> Result<(Vector, Mat)> {
        check_dim("car state", 1, x.len())?;
        Ok((x.clone(), Mat::identity(1, 1)))
    }

    fn input_matrix(&self, _t: f64, x: &Vector) -> Result<(Mat, Vec<Mat>)> {
        check_dim("car state", 1, x.len())?;
        Ok((Mat::from_element(1, 1, self.dt), vec![Mat::zeros(1, 1)]))
    }

    fn barrier(&self, i: usize, t: f64, x: &Vector) -> Result<ScalarEval> {
        check_dim("car state", 1, x.len())?;
        match i {
            0 => Ok(Self::affine(x[0] - t, 1.0, -1.0)),
            1 => Ok(Self::affine(1.0 + self.c * t - x[0], -1.0, self.c)),
            _ => Err(Error::InvalidInput("car has two barriers")),
        }
    }

    fn lyapunov(&self, _t: f64, _x: &Vector) -> Result<Option<ScalarEval>> {
        Ok(None)
    }

    /// Input effort only: `R = -u^2`.
    fn reward(&self, _t: f64, x: &Vector, u: &Vector) -> Result<RewardEval> {
        check_dim("car state", 1, x.len())?;
        check_dim("car input", 1, u.len())?;
        Ok(RewardEval {
            value: -u[0] * u[0],
            d_state: Vector::zeros(1),
            d_input: Vector::from_element(1, -2.0 * u[0]),
        })
    }

    fn input_weight(&self) -> Mat {
        Mat::identity(1, 1)
    }

    fn slack_weight(&self) -> f64 {
        0.0
    }
}
