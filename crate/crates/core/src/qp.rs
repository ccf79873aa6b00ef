//! Dense convex QP in margin form.
//!
//! ```text
//!     minimize    1/2 z' H z + f' z
//!     subject to  G z >= w
//! ```
//!
//! Solved by a primal active-set method on `H + eps I`. A Phase-1 problem
//! that minimizes the sum of squared constraint slacks runs first; it both
//! decides feasibility and supplies a feasible starting point, and it is
//! exposed on its own as [`min_relaxation`].

use alloc::vec::Vec;

use nalgebra::Cholesky;

use crate::error::{check_dim, Error, Result};
use crate::linalg::{all_finite, block_diag, inf_norm, Factorization, Mat, RowBasis, Vector};

/// Positive-definite floor added to the Hessian before solving.
pub const REGULARIZATION: f64 = 1e-9;
/// A point is feasible when every margin is at least `-FEASIBILITY_TOL`.
pub const FEASIBILITY_TOL: f64 = 1e-8;
/// Default KKT tolerance for [`solve`].
pub const DEFAULT_TOL: f64 = 1e-6;
/// Rows with margin at most this are candidates for the active set.
pub const ACTIVE_TOL: f64 = 1e-7;
/// Rows need a multiplier above this to count as active.
pub const DUAL_TOL: f64 = 1e-7;

const SYMMETRY_TOL: f64 = 1e-12;
const PSD_TOL: f64 = 1e-10;
const SLACK_TIE_TOL: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq)]
pub struct QpProblem {
    h: Mat,
    f: Vector,
    g: Mat,
    w: Vector,
}

impl QpProblem {
    /// Validates shapes, finiteness, symmetry and positive semidefiniteness of
    /// `h`. The stored Hessian is the symmetrized input.
    pub fn new(h: Mat, f: Vector, g: Mat, w: Vector) -> Result<Self> {
        let n = f.len();
        check_dim("hessian rows", n, h.nrows())?;
        check_dim("hessian cols", n, h.ncols())?;
        check_dim("constraint matrix cols", n, g.ncols())?;
        check_dim("constraint rows", g.nrows(), w.len())?;
        if !(all_finite(h.iter()) && all_finite(f.iter()) && all_finite(g.iter()) && all_finite(w.iter())) {
            return Err(Error::InvalidInput("QP data must be finite"));
        }
        for i in 0..n {
            for j in 0..i {
                if (h[(i, j)] - h[(j, i)]).abs() > SYMMETRY_TOL {
                    return Err(Error::InvalidInput("hessian is not symmetric"));
                }
            }
        }
        let h = (&h + h.transpose()) * 0.5;
        if n > 0 && Cholesky::new(&h + Mat::identity(n, n) * PSD_TOL).is_none() {
            return Err(Error::InvalidInput("hessian is not positive semidefinite"));
        }
        Ok(Self { h, f, g, w })
    }

    pub fn unconstrained(h: Mat, f: Vector) -> Result<Self> {
        let n = f.len();
        Self::new(h, f, Mat::zeros(0, n), Vector::zeros(0))
    }

    pub fn n_vars(&self) -> usize {
        self.f.len()
    }

    pub fn n_cons(&self) -> usize {
        self.w.len()
    }

    pub fn h(&self) -> &Mat {
        &self.h
    }

    pub fn f(&self) -> &Vector {
        &self.f
    }

    pub fn g(&self) -> &Mat {
        &self.g
    }

    pub fn w(&self) -> &Vector {
        &self.w
    }

    /// `G z - w`.
    pub fn margins(&self, z: &Vector) -> Vector {
        &self.g * z - &self.w
    }

    pub fn objective(&self, z: &Vector) -> f64 {
        0.5 * z.dot(&(&self.h * z)) + self.f.dot(z)
    }

    /// Same problem with rows reordered so that new row `k` is old row `perm[k]`.
    pub fn permute_rows(&self, perm: &[usize]) -> Result<Self> {
        check_dim("row permutation", self.n_cons(), perm.len())?;
        let g = Mat::from_fn(self.n_cons(), self.n_vars(), |r, c| self.g[(perm[r], c)]);
        let w = Vector::from_fn(self.n_cons(), |r, _| self.w[perm[r]]);
        Ok(Self {
            h: self.h.clone(),
            f: self.f.clone(),
            g,
            w,
        })
    }

    pub(crate) fn regularized_hessian(&self) -> Mat {
        let n = self.n_vars();
        &self.h + Mat::identity(n, n) * REGULARIZATION
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum QpStatus {
    Optimal,
    Infeasible,
    NumericalFailure,
}

#[derive(Debug, Clone, PartialEq)]
pub struct QpSolution {
    pub status: QpStatus,
    /// Primal point. For `Infeasible` this is the minimum-relaxation point.
    pub z: Vector,
    /// One multiplier per row, nonnegative.
    pub duals: Vector,
    /// Rows with margin at most [`ACTIVE_TOL`] and multiplier above [`DUAL_TOL`].
    pub active_set: Vec<usize>,
    pub objective: f64,
    /// Slack relaxation proving infeasibility, present only for `Infeasible`.
    pub certificate: Option<RelaxationReport>,
    pub iterations: usize,
}

impl QpSolution {
    pub fn is_optimal(&self) -> bool {
        self.status == QpStatus::Optimal
    }

    fn failure(n: usize, m: usize, iterations: usize) -> Self {
        Self {
            status: QpStatus::NumericalFailure,
            z: Vector::zeros(n),
            duals: Vector::zeros(m),
            active_set: Vec::new(),
            objective: f64::NAN,
            certificate: None,
            iterations,
        }
    }
}

/// Result of minimizing `sum s_i^2` subject to `G z + s >= w`, `s >= 0`.
#[derive(Debug, Clone, PartialEq)]
pub struct RelaxationReport {
    pub slacks: Vector,
    /// Row with the largest slack, `None` when the problem is feasible.
    pub limiting_index: Option<usize>,
    pub relaxed_solution: Vector,
}

impl RelaxationReport {
    pub fn max_slack(&self) -> f64 {
        self.slacks.iter().fold(0.0, |m, s| m.max(*s))
    }

    pub fn is_feasible(&self) -> bool {
        self.limiting_index.is_none()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KktResiduals {
    /// `||H z + f - G' lambda||_inf`
    pub stationarity: f64,
    /// Largest negative margin, reported as a nonnegative number.
    pub primal: f64,
    /// `max_i |lambda_i * margin_i|`
    pub complementarity: f64,
    /// Most negative multiplier, reported as a nonnegative number.
    pub dual: f64,
    /// Largest multiplier magnitude, used to scale the complementarity test.
    pub dual_scale: f64,
}

impl KktResiduals {
    pub fn within(&self, p: &QpProblem, tol: f64) -> bool {
        self.stationarity <= tol * (1.0 + inf_norm(p.f()))
            && self.primal <= FEASIBILITY_TOL
            && self.complementarity <= tol * (1.0 + self.dual_scale)
            && self.dual <= 1e-10
    }
}

pub fn kkt_residuals(p: &QpProblem, z: &Vector, duals: &Vector) -> KktResiduals {
    let stat = p.h() * z + p.f() - p.g().transpose() * duals;
    let margins = p.margins(z);
    KktResiduals {
        stationarity: inf_norm(&stat),
        primal: margins.iter().fold(0.0, |m, v| m.max(-v)),
        complementarity: margins
            .iter()
            .zip(duals.iter())
            .fold(0.0, |m, (e, l)| m.max((e * l).abs())),
        dual: duals.iter().fold(0.0, |m, l| m.max(-l)),
        dual_scale: inf_norm(duals),
    }
}

/// Solve `p`, running Phase 1 first.
pub fn solve(p: &QpProblem, tol: f64) -> QpSolution {
    solve_inner(p, None, tol)
}

/// Solve `p` starting from `start`. When `start` violates a row by more than
/// [`FEASIBILITY_TOL`] this falls back to [`solve`].
pub fn solve_from(p: &QpProblem, start: &Vector, tol: f64) -> QpSolution {
    solve_inner(p, Some(start), tol)
}

fn solve_inner(p: &QpProblem, start: Option<&Vector>, tol: f64) -> QpSolution {
    let (n, m) = (p.n_vars(), p.n_cons());
    let h = p.regularized_hessian();
    let feasible_start = start
        .filter(|z| z.len() == n && p.margins(z).iter().all(|e| *e >= -FEASIBILITY_TOL))
        .cloned();
    let (z0, phase1_iters) = match feasible_start {
        Some(z) => (z, 0),
        None if m == 0 => (Vector::zeros(n), 0),
        None => match relax(p) {
            Ok((report, iters)) => {
                if !report.is_feasible() {
                    let z = report.relaxed_solution.clone();
                    return QpSolution {
                        status: QpStatus::Infeasible,
                        objective: p.objective(&z),
                        z,
                        duals: Vector::zeros(m),
                        active_set: Vec::new(),
                        certificate: Some(report),
                        iterations: iters,
                    };
                }
                (report.relaxed_solution, iters)
            }
            Err(iters) => return QpSolution::failure(n, m, iters),
        },
    };
    let mut out = match primal_active_set(&h, p.f(), p.g(), p.w(), z0) {
        Ok(out) => out,
        Err(iters) => {
            return QpSolution::failure(n, m, phase1_iters + iters)},
    };
    polish(p, &mut out);
    let iterations = phase1_iters + out.iterations;
    let res = kkt_residuals(p, &out.z, &out.duals);
    if !res.within(p, tol) {
        return QpSolution::failure(n, m, iterations);
    }
    let margins = p.margins(&out.z);
    let active_set = (0..m)
        .filter(|&i| margins[i] <= ACTIVE_TOL && out.duals[i] > DUAL_TOL)
        .collect();
    QpSolution {
        status: QpStatus::Optimal,
        objective: p.objective(&out.z),
        z: out.z,
        duals: out.duals,
        active_set,
        certificate: None,
        iterations,
    }
}

/// Minimum sum-of-squares slack relaxation of the constraints of `p`.
pub fn min_relaxation(p: &QpProblem) -> Result<RelaxationReport> {
    relax(p)
        .map(|(r, _)| r)
        .map_err(|_| Error::NumericalFailure("slack relaxation did not converge"))
}

const PROX_PASSES: usize = 5;

fn relax(p: &QpProblem) -> core::result::Result<(RelaxationReport, usize), usize> {
    let (n, m) = (p.n_vars(), p.n_cons());
    if m == 0 {
        let report = RelaxationReport {
            slacks: Vector::zeros(0),
            limiting_index: None,
            relaxed_solution: Vector::zeros(n),
        };
        return Ok((report, 0));
    }
    // variables (z, s); rows [G I](z, s) >= w and s >= 0
    let h = block_diag(&Mat::zeros(n, n), &(Mat::identity(m, m) * 2.0))
        + Mat::identity(n + m, n + m) * REGULARIZATION;
    let mut g = Mat::zeros(2 * m, n + m);
    g.view_mut((0, 0), (m, n)).copy_from(p.g());
    for i in 0..m {
        g[(i, n + i)] = 1.0;
        g[(m + i, n + i)] = 1.0;
    }
    let mut w = Vector::zeros(2 * m);
    w.rows_mut(0, m).copy_from(p.w());
    let mut start = Vector::zeros(n + m);
    for i in 0..m {
        start[n + i] = p.w()[i].max(0.0);
    }
    // proximal passes remove the bias of the regularization on z
    let mut out = primal_active_set(&h, &Vector::zeros(n + m), &g, &w, start)?;
    let mut iterations = out.iterations;
    for _ in 0..PROX_PASSES {
        let f = &out.z * -REGULARIZATION;
        let next = primal_active_set(&h, &f, &g, &w, out.z.clone())?;
        iterations += next.iterations;
        let moved = (&next.z - &out.z).amax();
        out = next;
        if moved <= 1e-15 {
            break;
        }
    }
    out.iterations = iterations;
    let z = out.z.rows(0, n).into_owned();
    let slacks = Vector::from_fn(m, |i, _| (p.w()[i] - p.g().row(i).dot(&z.transpose())).max(0.0));
    let max = slacks.iter().fold(0.0, |a: f64, s| a.max(*s));
    let report = if max <= FEASIBILITY_TOL {
        RelaxationReport {
            slacks: Vector::zeros(m),
            limiting_index: None,
            relaxed_solution: z,
        }
    } else {
        let limiting = (0..m).find(|&i| slacks[i] >= max - SLACK_TIE_TOL);
        RelaxationReport {
            slacks,
            limiting_index: limiting,
            relaxed_solution: z,
        }
    };
    Ok((report, out.iterations))
}

/// Re-solve the final working set without the Hessian regularization, which
/// otherwise shifts the solution by about `REGULARIZATION * |z|`. Kept only
/// if the result is still primal and dual feasible.
fn polish(p: &QpProblem, out: &mut ActiveSetOutcome) {
    let Some((z, lambda)) = solve_eqp(p.h(), p.f(), p.g(), p.w(), &out.working) else {
        return;
    };
    let primal_ok = p.margins(&z).iter().all(|e| *e >= -FEASIBILITY_TOL);
    if !primal_ok || lambda.iter().any(|l| *l < -1e-10) || !all_finite(z.iter()) {
        return;
    }
    let mut duals = Vector::zeros(p.n_cons());
    for (j, &i) in out.working.iter().enumerate() {
        duals[i] = lambda[j].max(0.0);
    }
    out.z = z;
    out.duals = duals;
}

struct ActiveSetOutcome {
    z: Vector,
    duals: Vector,
    working: Vec<usize>,
    iterations: usize,
}

/// Primal active-set iterations from a point that satisfies every row to
/// within [`FEASIBILITY_TOL`]. `h` must be positive definite. On failure the
/// iteration count is returned.
fn primal_active_set(
    h: &Mat,
    f: &Vector,
    g: &Mat,
    w: &Vector,
    z0: Vector,
) -> core::result::Result<ActiveSetOutcome, usize> {
    let (n, m) = (f.len(), w.len());
    let max_iter = 100 * (n + m) + 100;
    let row = |i: usize| g.row(i).transpose();

    let mut z = z0;
    let mut working: Vec<usize> = Vec::new();
    {
        let margins = g * &z - w;
        let mut basis = RowBasis::default();
        for i in 0..m {
            if margins[i] <= FEASIBILITY_TOL && basis.try_push(&row(i)) {
                working.push(i);
            }
        }
    }

    for iter in 0..max_iter {
        let (z_eq, lambda) = solve_eqp(h, f, g, w, &working).ok_or(iter)?;
        let p = &z_eq - &z;
        let p_norm = inf_norm(&p);
        if p_norm <= 1e-11 * (1.0 + inf_norm(&z)) {
            z = z_eq;
            let most_negative = lambda
                .iter()
                .enumerate()
                .fold(None, |best: Option<(usize, f64)>, (j, &l)| match best {
                    Some((_, b)) if b <= l => best,
                    _ => Some((j, l)),
                });
            match most_negative {
                Some((j, l)) if l < -1e-10 => {
                    working.remove(j);
                }
                _ => {
                    let mut duals = Vector::zeros(m);
                    for (j, &i) in working.iter().enumerate() {
                        duals[i] = lambda[j].max(0.0);
                    }
                    return Ok(ActiveSetOutcome {
                        z,
                        duals,
                        working,
                        iterations: iter + 1,
                    });
                }
            }
            continue;
        }

        let mut step = 1.0;
        let mut blocking = None;
        for i in 0..m {
            if working.contains(&i) {
                continue;
            }
            let gi = row(i);
            let gp = gi.dot(&p);
            if gp < -1e-14 * gi.norm() * p.norm() {
                let margin = gi.dot(&z) - w[i];
                let ratio = margin.max(0.0) / -gp;
                if ratio < step {
                    step = ratio;
                    blocking = Some(i);
                }
            }
        }
        z.axpy(step, &p, 1.0);
        if let Some(i) = blocking {
            working.push(i);
        }
    }
    Err(max_iter)
}

/// Minimize over `G_W z = w_W`; returns the minimizer and working-set multipliers.
fn solve_eqp(h: &Mat, f: &Vector, g: &Mat, w: &Vector, working: &[usize]) -> Option<(Vector, Vector)> {
    let n = f.len();
    let k = working.len();
    // rows are normalized so that pivots are comparable with the Hessian
    let scale: Vec<f64> = working
        .iter()
        .map(|&i| {
            let norm = g.row(i).norm();
            if norm > 0.0 {
                1.0 / norm
            } else {
                1.0
            }
        })
        .collect();
    let mut kkt = Mat::zeros(n + k, n + k);
    kkt.view_mut((0, 0), (n, n)).copy_from(h);
    let mut rhs = Vector::zeros(n + k);
    rhs.rows_mut(0, n).copy_from(&(-f));
    for (j, &i) in working.iter().enumerate() {
        for c in 0..n {
            kkt[(c, n + j)] = -g[(i, c)] * scale[j];
            kkt[(n + j, c)] = g[(i, c)] * scale[j];
        }
        rhs[n + j] = w[i] * scale[j];
    }
    let lu = Factorization::new(kkt.clone())?;
    let mut sol = lu.solve_vec(&rhs);
    // one refinement step keeps active margins near rounding level
    let residual = &rhs - &kkt * &sol;
    sol += lu.solve_vec(&residual);
    let lambda = Vector::from_fn(k, |j, _| sol[n + j] * scale[j]);
    Some((sol.rows(0, n).into_owned(), lambda))
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    fn scalar_qp(h: f64, f: f64, rows: &[(f64, f64)]) -> QpProblem {
        let g = Mat::from_fn(rows.len(), 1, |r, _| rows[r].0);
        let w = Vector::from_fn(rows.len(), |r, _| rows[r].1);
        QpProblem::new(Mat::from_element(1, 1, h), Vector::from_element(1, f), g, w).unwrap()
    }

    #[test]
    fn unconstrained_minimum_at_nominal() {
        // (z - 1)^2 = z^2 - 2z + 1
        let p = QpProblem::unconstrained(Mat::from_element(1, 1, 2.0), Vector::from_element(1, -2.0)).unwrap();
        let s = solve(&p, DEFAULT_TOL);
        assert_eq!(s.status, QpStatus::Optimal);
        assert!((s.z[0] - 1.0).abs() < 1e-8);
        assert_eq!(s.duals.len(), 0);
    }

    #[test]
    fn single_active_lower_bound() {
        let p = scalar_qp(2.0, 0.0, &[(1.0, 2.0)]);
        let s = solve(&p, DEFAULT_TOL);
        assert_eq!(s.status, QpStatus::Optimal);
        assert!((s.z[0] - 2.0).abs() < 1e-10);
        assert!((s.duals[0] - 4.0).abs() < 1e-7);
        assert_eq!(s.active_set, vec![0]);
    }

    #[test]
    fn contradictory_bounds_are_infeasible() {
        // z >= 1 and z <= 0
        let p = scalar_qp(2.0, 0.0, &[(1.0, 1.0), (-1.0, 0.0)]);
        let s = solve(&p, DEFAULT_TOL);
        assert_eq!(s.status, QpStatus::Infeasible);
        let cert = s.certificate.unwrap();
        assert!(cert.max_slack() > 0.4);
    }

    #[test]
    fn symmetric_one_dimensional_relaxation() {
        let p = scalar_qp(2.0, 0.0, &[(1.0, 1.0), (-1.0, 0.0)]);
        let r = min_relaxation(&p).unwrap();
        assert!((r.slacks[0] - 0.5).abs() < 1e-7);
        assert!((r.slacks[1] - 0.5).abs() < 1e-7);
        assert!((r.relaxed_solution[0] - 0.5).abs() < 1e-7);
        // exact tie goes to the smaller index
        assert_eq!(r.limiting_index, Some(0));
    }

    #[test]
    fn feasible_relaxation_has_no_limiting_row() {
        let p = scalar_qp(0.0, 0.0, &[(1.0, 0.0)]);
        let r = min_relaxation(&p).unwrap();
        assert_eq!(r.slacks[0], 0.0);
        assert_eq!(r.limiting_index, None);
    }

    #[test]
    fn rejects_asymmetric_and_indefinite_hessians() {
        let asym = Mat::from_row_slice(2, 2, &[1.0, 0.5, 0.0, 1.0]);
        assert!(QpProblem::unconstrained(asym, Vector::zeros(2)).is_err());
        let indef = Mat::from_row_slice(2, 2, &[1.0, 0.0, 0.0, -1.0]);
        assert!(QpProblem::unconstrained(indef, Vector::zeros(2)).is_err());
        let nan = Mat::from_element(1, 1, f64::NAN);
        assert!(QpProblem::unconstrained(nan, Vector::zeros(1)).is_err());
    }

    #[test]
    fn warm_start_matches_cold_start() {
        let h = Mat::from_row_slice(2, 2, &[2.0, 0.5, 0.5, 1.0]);
        let f = Vector::from_vec(vec![-1.0, -1.0]);
        let g = Mat::from_row_slice(3, 2, &[-1.0, -1.0, 1.0, 0.0, 0.0, 1.0]);
        let w = Vector::from_vec(vec![-0.5, 0.0, 0.0]);
        let p = QpProblem::new(h, f, g, w).unwrap();
        let cold = solve(&p, DEFAULT_TOL);
        let warm = solve_from(&p, &Vector::zeros(2), DEFAULT_TOL);
        assert!(cold.is_optimal() && warm.is_optimal());
        assert!((cold.z - warm.z).norm() < 1e-9);
    }
}
