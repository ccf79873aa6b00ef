//! Independent oracles for the acceptance suite. Nothing here calls the
//! solver under test.

#![allow(dead_code)]

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rfggd::rfggd_core::qp::QpProblem;
use rfggd::rfggd_core::{Mat, Vector};

/// Standard normal sample by Box-Muller.
pub fn normal(rng: &mut ChaCha8Rng) -> f64 {
    let u1: f64 = rng.random_range(f64::EPSILON..1.0);
    let u2: f64 = rng.random::<f64>();
    (-2.0 * u1.ln()).sqrt() * (2.0 * std::f64::consts::PI * u2).cos()
}

pub fn normal_mat(rng: &mut ChaCha8Rng, r: usize, c: usize) -> Mat {
    Mat::from_fn(r, c, |_, _| normal(rng))
}

pub fn normal_vec(rng: &mut ChaCha8Rng, n: usize) -> Vector {
    Vector::from_fn(n, |_, _| normal(rng))
}

/// `n <= 6`, `m <= 10`, `H = M'M + 0.1 I`, Gaussian `f`, `G`, `w`.
pub fn random_qp(rng: &mut ChaCha8Rng) -> QpProblem {
    let n = rng.random_range(1..=6);
    let m = rng.random_range(0..=10);
    let a = normal_mat(rng, n, n);
    let h = a.transpose() * &a + Mat::identity(n, n) * 0.1;
    QpProblem::new(h, normal_vec(rng, n), normal_mat(rng, m, n), normal_vec(rng, m)).unwrap()
}

/// Gaussian elimination with partial pivoting and one step of iterative
/// refinement.
pub fn gauss_solve(a: Vec<Vec<f64>>, b: Vec<f64>) -> Option<Vec<f64>> {
    let x = eliminate(a.clone(), b.clone())?;
    let r: Vec<f64> = (0..b.len())
        .map(|i| b[i] - a[i].iter().zip(&x).map(|(p, q)| p * q).sum::<f64>())
        .collect();
    let dx = eliminate(a, r)?;
    Some(x.iter().zip(&dx).map(|(p, q)| p + q).collect())
}

fn eliminate(mut a: Vec<Vec<f64>>, mut b: Vec<f64>) -> Option<Vec<f64>> {
    let n = b.len();
    let scale = a.iter().flatten().fold(1.0f64, |m, v| m.max(v.abs()));
    for col in 0..n {
        let piv = (col..n).max_by(|&i, &j| a[i][col].abs().total_cmp(&a[j][col].abs()))?;
        if a[piv][col].abs() <= 1e-11 * scale {
            return None;
        }
        a.swap(col, piv);
        b.swap(col, piv);
        for r in col + 1..n {
            let f = a[r][col] / a[col][col];
            if f != 0.0 {
                for c in col..n {
                    a[r][c] -= f * a[col][c];
                }
                b[r] -= f * b[col];
            }
        }
    }
    let mut x = vec![0.0; n];
    for r in (0..n).rev() {
        let s: f64 = (r + 1..n).map(|c| a[r][c] * x[c]).sum();
        x[r] = (b[r] - s) / a[r][r];
    }
    Some(x)
}

pub enum Enumerated {
    Optimal { z: Vec<f64>, objective: f64 },
    Infeasible,
}

fn subsets(m: usize, max: usize) -> Vec<Vec<usize>> {
    let mut out = vec![vec![]];
    for i in 0..m {
        let more: Vec<Vec<usize>> = out
            .iter()
            .filter(|s| s.len() < max)
            .map(|s| {
                let mut t = s.clone();
                t.push(i);
                t
            })
            .collect();
        out.extend(more);
    }
    out
}

/// Solve a strictly convex QP by trying every candidate active set of at
/// most `n` rows and keeping the KKT points.
pub fn enumerate_qp(p: &QpProblem) -> Enumerated {
    let (n, m) = (p.n_vars(), p.n_cons());
    let (h, f, g, w) = (p.h(), p.f(), p.g(), p.w());
    let mut best: Option<(Vec<f64>, f64)> = None;
    for s in subsets(m, n) {
        let k = s.len();
        let mut a = vec![vec![0.0; n + k]; n + k];
        let mut b = vec![0.0; n + k];
        for r in 0..n {
            for c in 0..n {
                a[r][c] = h[(r, c)];
            }
            b[r] = -f[r];
        }
        for (j, &i) in s.iter().enumerate() {
            for c in 0..n {
                a[c][n + j] = -g[(i, c)];
                a[n + j][c] = g[(i, c)];
            }
            b[n + j] = w[i];
        }
        let Some(sol) = gauss_solve(a, b) else { continue };
        let z = &sol[..n];
        let primal_ok = (0..m).all(|i| (0..n).map(|c| g[(i, c)] * z[c]).sum::<f64>() - w[i] >= -1e-9);
        let dual_ok = sol[n..].iter().all(|l| *l >= -1e-9);
        if primal_ok && dual_ok {
            let hz: Vec<f64> = (0..n).map(|r| (0..n).map(|c| h[(r, c)] * z[c]).sum()).collect();
            let obj = 0.5 * z.iter().zip(&hz).map(|(a, b)| a * b).sum::<f64>()
                + z.iter().zip(f.iter()).map(|(a, b)| a * b).sum::<f64>();
            if best.as_ref().map_or(true, |(_, o)| obj < *o) {
                best = Some((z.to_vec(), obj));
            }
        }
    }
    match best {
        Some((z, objective)) => Enumerated::Optimal { z, objective },
        None => Enumerated::Infeasible,
    }
}

/// Strictly complementary QP with a planted solution: `k` rows active with
/// multipliers in `[0.5, 2]`, the rest slack by at least `0.5`.
pub fn planted_qp(rng: &mut ChaCha8Rng) -> QpProblem {
    let n = rng.random_range(2..=6);
    let m = rng.random_range(1..=8);
    let k = rng.random_range(0..=m.min(n));
    let a = normal_mat(rng, n, n);
    let h = a.transpose() * &a + Mat::identity(n, n) * 0.1;
    let g = normal_mat(rng, m, n);
    let z = normal_vec(rng, n);
    let lambda = Vector::from_fn(m, |i, _| if i < k { rng.random_range(0.5..2.0) } else { 0.0 });
    let w = Vector::from_fn(m, |i, _| {
        let gz = g.row(i).transpose().dot(&z);
        if i < k {
            gz
        } else {
            gz - rng.random_range(0.5..2.0)
        }
    });
    let f = g.transpose() * &lambda - &h * &z;
    QpProblem::new(h, f, g, w).unwrap()
}

/// `|a - b| / max(|b|, floor)`.
pub fn rel_err(a: f64, b: f64, floor: f64) -> f64 {
    (a - b).abs() / b.abs().max(floor)
}
