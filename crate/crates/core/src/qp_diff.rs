//! Implicit differentiation of the QP solution map.
//!
//! At an optimal solution with active rows `A`, differentiating the KKT
//! conditions gives
//!
//! ```text
//!     [ H       -G_A'            ] [dz  ]   [ -(dH z + df - dG_A' lambda_A) ]
//!     [ G_A     diag(e_A/lam_A)  ] [dl_A] = [ dw_A - dG_A z                 ]
//! ```
//!
//! which is the complementarity row `lam_i de_i + e_i dlam_i = 0` divided by
//! `lam_i`. The matrix is factored once and reused for every right-hand side.

use alloc::vec::Vec;

use crate::error::{check_dim, Error, Result};
use crate::linalg::{Factorization, Mat, Vector};
use crate::qp::{QpProblem, QpSolution, ACTIVE_TOL, DUAL_TOL};

pub const TOL_ACTIVE: f64 = ACTIVE_TOL;
pub const TOL_DUAL: f64 = DUAL_TOL;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DegeneracyFlag {
    StrictlyActive,
    StrictlyInactive,
    /// Tight with a vanishing multiplier. Differentiated as inactive.
    Degenerate,
}

/// A perturbation of the QP data. `dh` may be omitted when the Hessian is fixed.
#[derive(Debug, Clone, PartialEq)]
pub struct Perturbation {
    pub dh: Option<Mat>,
    pub df: Vector,
    pub dg: Mat,
    pub dw: Vector,
}

impl Perturbation {
    pub fn zeros(n: usize, m: usize) -> Self {
        Self {
            dh: None,
            df: Vector::zeros(n),
            dg: Mat::zeros(m, n),
            dw: Vector::zeros(m),
        }
    }
}

/// Derivatives of `(f, G, w)` along each state and each parameter coordinate.
#[derive(Debug, Clone, PartialEq)]
pub struct StructuralGradients {
    pub wrt_state: Vec<Perturbation>,
    pub wrt_params: Vec<Perturbation>,
}

#[derive(Debug, Clone)]
pub struct SolutionJacobian {
    n: usize,
    m: usize,
    active: Vec<usize>,
    kkt: Factorization,
    z: Vector,
    duals: Vector,
}

impl SolutionJacobian {
    pub fn n_vars(&self) -> usize {
        self.n
    }

    pub fn n_cons(&self) -> usize {
        self.m
    }

    /// Rows treated as active.
    pub fn active_rows(&self) -> &[usize] {
        &self.active
    }

    /// Apply the linearized solution map to a data perturbation, returning
    /// `(dz, dlambda)`.
    pub fn apply(&self, d: &Perturbation) -> Result<(Vector, Vector)> {
        self.check(d)?;
        let (n, k) = (self.n, self.active.len());
        let mut rhs = Vector::zeros(n + k);
        let mut top = -&d.df;
        if let Some(dh) = &d.dh {
            let sym = (dh + dh.transpose()) * 0.5;
            top -= sym * &self.z;
        }
        for &i in &self.active {
            top.axpy(self.duals[i], &d.dg.row(i).transpose(), 1.0);
        }
        rhs.rows_mut(0, n).copy_from(&top);
        for (j, &i) in self.active.iter().enumerate() {
            rhs[n + j] = d.dw[i] - d.dg.row(i).transpose().dot(&self.z);
        }
        let sol = self.kkt.solve_vec(&rhs);
        let dz = sol.rows(0, n).into_owned();
        let mut dl = Vector::zeros(self.m);
        for (j, &i) in self.active.iter().enumerate() {
            dl[i] = sol[n + j];
        }
        Ok((dz, dl))
    }

    /// `dz/dw`, an `n x m` matrix.
    pub fn dz_dw(&self) -> Mat {
        let (n, k) = (self.n, self.active.len());
        let mut rhs = Mat::zeros(n + k, self.m);
        for (j, &i) in self.active.iter().enumerate() {
            rhs[(n + j, i)] = 1.0;
        }
        self.kkt.solve_mat(&rhs).rows(0, n).into_owned()
    }

    /// `dz/df`, an `n x n` matrix.
    pub fn dz_df(&self) -> Mat {
        let (n, k) = (self.n, self.active.len());
        let mut rhs = Mat::zeros(n + k, n);
        for c in 0..n {
            rhs[(c, c)] = -1.0;
        }
        self.kkt.solve_mat(&rhs).rows(0, n).into_owned()
    }

    fn check(&self, d: &Perturbation) -> Result<()> {
        check_dim("perturbation df", self.n, d.df.len())?;
        check_dim("perturbation dw", self.m, d.dw.len())?;
        check_dim("perturbation dG rows", self.m, d.dg.nrows())?;
        check_dim("perturbation dG cols", self.n, d.dg.ncols())?;
        if let Some(dh) = &d.dh {
            check_dim("perturbation dH rows", self.n, dh.nrows())?;
            check_dim("perturbation dH cols", self.n, dh.ncols())?;
        }
        Ok(())
    }
}

pub fn classify(margin: f64, dual: f64, tol_act: f64, tol_dual: f64) -> DegeneracyFlag {
    if margin.abs() <= tol_act && dual <= tol_dual {
        DegeneracyFlag::Degenerate
    } else if margin <= tol_act && dual > tol_dual {
        DegeneracyFlag::StrictlyActive
    } else {
        DegeneracyFlag::StrictlyInactive
    }
}

/// Factor the differentiated KKT system at an optimal solution.
pub fn solution_jacobian(
    p: &QpProblem,
    s: &QpSolution,
    tol_act: f64,
    tol_dual: f64,
) -> Result<(SolutionJacobian, Vec<DegeneracyFlag>)> {
    if !s.is_optimal() {
        return Err(Error::InvalidInput("solution jacobian needs an optimal solution"));
    }
    let (n, m) = (p.n_vars(), p.n_cons());
    check_dim("solution primal", n, s.z.len())?;
    check_dim("solution duals", m, s.duals.len())?;
    let margins = p.margins(&s.z);
    let flags: Vec<DegeneracyFlag> = (0..m)
        .map(|i| classify(margins[i], s.duals[i], tol_act, tol_dual))
        .collect();
    let active: Vec<usize> = (0..m)
        .filter(|&i| flags[i] == DegeneracyFlag::StrictlyActive)
        .collect();

    let k = active.len();
    let build = |dual_shift: f64| {
        let mut kkt = Mat::zeros(n + k, n + k);
        kkt.view_mut((0, 0), (n, n)).copy_from(&p.regularized_hessian());
        for (j, &i) in active.iter().enumerate() {
            for c in 0..n {
                kkt[(c, n + j)] = -p.g()[(i, c)];
                kkt[(n + j, c)] = p.g()[(i, c)];
            }
            kkt[(n + j, n + j)] = margins[i] / s.duals[i] - dual_shift;
        }
        kkt
    };
    let kkt = Factorization::new(build(0.0))
        .or_else(|| Factorization::new(build(1e-10)))
        .ok_or(Error::SingularKkt)?;
    let jac = SolutionJacobian {
        n,
        m,
        active,
        kkt,
        z: s.z.clone(),
        duals: s.duals.clone(),
    };
    Ok((jac, flags))
}

/// Solution sensitivities with respect to state and parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct InputSensitivity {
    /// `dz/dx`, all decision variables.
    pub dz_dx: Mat,
    /// Direct `dz/dtheta`, all decision variables.
    pub dz_dtheta: Mat,
    pub n_inputs: usize,
}

impl InputSensitivity {
    pub fn du_dx(&self) -> Mat {
        self.dz_dx.rows(0, self.n_inputs).into_owned()
    }

    pub fn du_dtheta(&self) -> Mat {
        self.dz_dtheta.rows(0, self.n_inputs).into_owned()
    }
}

/// Compose the solution Jacobian with structural gradients. The control
/// inputs are the leading `n_inputs` decision variables.
pub fn chain_to_inputs(
    j: &SolutionJacobian,
    grads: &StructuralGradients,
    n_inputs: usize,
) -> Result<InputSensitivity> {
    if n_inputs > j.n_vars() {
        return Err(Error::DimensionMismatch {
            what: "control inputs",
            expected: j.n_vars(),
            found: n_inputs,
        });
    }
    let stack = |dirs: &[Perturbation]| -> Result<Mat> {
        let mut out = Mat::zeros(j.n_vars(), dirs.len());
        for (c, d) in dirs.iter().enumerate() {
            let (dz, _) = j.apply(d)?;
            out.set_column(c, &dz);
        }
        Ok(out)
    };
    Ok(InputSensitivity {
        dz_dx: stack(&grads.wrt_state)?,
        dz_dtheta: stack(&grads.wrt_params)?,
        n_inputs,
    })
}
