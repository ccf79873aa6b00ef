//! Differentiable CBF-CLF quadratic-program controllers.
//!
//! The crate solves the small dense QP that a discrete-time control barrier
//! function (CBF) / control Lyapunov function (CLF) controller poses at every
//! step, differentiates its solution through the KKT conditions, rolls the
//! closed loop forward while carrying parameter sensitivities, and updates the
//! controller parameters with feasibility-guided gradient steps:
//!
//! * [`qp`] - primal active-set solver, Phase-1 slack relaxation.
//! * [`qp_diff`] - implicit differentiation of the solution map.
//! * [`plant`] - plant abstraction, the shrinking-corridor car and the
//!   leader-following unicycle, per-step QP assembly.
//! * [`rollout`] - closed-loop rollouts with forward sensitivities.
//! * [`rfggd`] - feasible-direction updates and the online adaptation loop.
//!
//! Everything here is `no_std` (with `alloc`); file formats, experiments and
//! the command-line driver live in the companion `rfggd` crate.
//!
//! Constraints are always written in margin form `G z >= w`, so a row is
//! satisfied when its margin `G z - w` is nonnegative.

#![no_std]

extern crate alloc;

#[cfg(test)]
extern crate std;

pub mod error;
pub mod linalg;
pub mod plant;
pub mod qp;
pub mod qp_diff;
pub mod rfggd;
pub mod rollout;

pub use error::{Error, Result};
pub use linalg::{Mat, Vector};
