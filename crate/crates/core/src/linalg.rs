//! Thin helpers over `nalgebra` dense types.

use nalgebra::{DMatrix, DVector, LU};

pub type Mat = DMatrix<f64>;
pub type Vector = DVector<f64>;

/// Relative pivot threshold below which a factorization is declared singular.
const PIVOT_TOL: f64 = 1e-13;

/// LU factorization of a square matrix that has passed a pivot-size check.
#[derive(Debug, Clone)]
pub struct Factorization {
    lu: LU<f64, nalgebra::Dyn, nalgebra::Dyn>,
}

impl Factorization {
    /// Factor `a`, returning `None` when a pivot is negligible relative to the
    /// largest entry of `a`.
    pub fn new(a: Mat) -> Option<Self> {
        if a.nrows() != a.ncols() {
            return None;
        }
        let scale = max_abs(&a).max(1.0);
        let lu = a.lu();
        let u = lu.u();
        if u.diagonal().iter().any(|p| !p.is_finite() || p.abs() <= PIVOT_TOL * scale) {
            return None;
        }
        Some(Self { lu })
    }

    pub fn dim(&self) -> usize {
        self.lu.l().nrows()
    }

    pub fn solve_vec(&self, b: &Vector) -> Vector {
        self.lu.solve(b).expect("factorization checked non-singular")
    }

    pub fn solve_mat(&self, b: &Mat) -> Mat {
        self.lu.solve(b).expect("factorization checked non-singular")
    }
}

pub fn max_abs(a: &Mat) -> f64 {
    a.iter().fold(0.0, |m, v| m.max(v.abs()))
}

pub fn inf_norm(v: &Vector) -> f64 {
    v.iter().fold(0.0, |m, x| m.max(x.abs()))
}

pub fn all_finite<'a>(it: impl IntoIterator<Item = &'a f64>) -> bool {
    it.into_iter().all(|v| v.is_finite())
}

/// Block-diagonal matrix from two square blocks.
pub fn block_diag(a: &Mat, b: &Mat) -> Mat {
    let n = a.nrows() + b.nrows();
    let mut out = Mat::zeros(n, n);
    out.view_mut((0, 0), (a.nrows(), a.ncols())).copy_from(a);
    out.view_mut((a.nrows(), a.ncols()), (b.nrows(), b.ncols()))
        .copy_from(b);
    out
}

/// Incrementally maintained orthonormal basis used to test whether a new
/// constraint gradient is linearly independent of a working set.
#[derive(Debug, Clone, Default)]
pub(crate) struct RowBasis {
    basis: alloc::vec::Vec<Vector>,
}

impl RowBasis {
    /// Returns `true` and extends the basis when `row` is independent of the
    /// rows already accepted.
    pub fn try_push(&mut self, row: &Vector) -> bool {
        let norm = row.norm();
        if norm <= 1e-12 {
            return false;
        }
        let mut r = row / norm;
        // two passes of modified Gram-Schmidt
        for _ in 0..2 {
            for q in &self.basis {
                let c = q.dot(&r);
                r.axpy(-c, q, 1.0);
            }
        }
        let rn = r.norm();
        if rn <= 1e-9 {
            return false;
        }
        self.basis.push(r / rn);
        true
    }
}
