//! Matrix-free conjugate gradients for the symmetric positive semidefinite
//! systems produced by the weighted Laplacians.
//!
//! The operators here have a one-dimensional kernel (the constants), so the
//! driver projects the right-hand side onto the range once and keeps the
//! iterates there; the returned solution is regauged to zero weighted mean.

use crate::LabError;

pub struct CgResult {
    pub x: Vec<f64>,
    pub iterations: usize,
    pub residual: f64,
}

/// Solve `A x = b` for symmetric positive (semi)definite `A` given as a
/// closure. `precond`, when present, holds the inverse diagonal of `A`.
pub fn conjugate_gradient(
    apply: impl Fn(&[f64]) -> Vec<f64>,
    b: &[f64],
    precond: Option<&[f64]>,
    tol: f64,
    max_iter: usize,
) -> Result<CgResult, LabError> {
    let n = b.len();
    let bnorm = b.iter().map(|v| v * v).sum::<f64>().sqrt().max(1e-300);
    let mut x = vec![0.0; n];
    let mut r = b.to_vec();
    let mut z = apply_precond(precond, &r);
    let mut p = z.clone();
    let mut rz = dot(&r, &z);
    let mut best = f64::INFINITY;
    for it in 0..max_iter {
        let rnorm = dot(&r, &r).sqrt();
        best = best.min(rnorm);
        if rnorm <= tol * bnorm {
            return Ok(CgResult {
                x,
                iterations: it,
                residual: rnorm / bnorm,
            });
        }
        let ap = apply(&p);
        let pap = dot(&p, &ap);
        if !pap.is_finite() || pap <= 0.0 {
            return Err(LabError::SolverFailure {
                iterations: it,
                residual: rnorm / bnorm,
            });
        }
        let alpha = rz / pap;
        for i in 0..n {
            x[i] += alpha * p[i];
            r[i] -= alpha * ap[i];
        }
        z = apply_precond(precond, &r);
        let rz_new = dot(&r, &z);
        let beta = rz_new / rz;
        rz = rz_new;
        for i in 0..n {
            p[i] = z[i] + beta * p[i];
        }
    }
    let rnorm = dot(&r, &r).sqrt();
    if rnorm <= tol * bnorm {
        return Ok(CgResult {
            x,
            iterations: max_iter,
            residual: rnorm / bnorm,
        });
    }
    Err(LabError::SolverFailure {
        iterations: max_iter,
        residual: rnorm / bnorm,
    })
}

fn apply_precond(precond: Option<&[f64]>, r: &[f64]) -> Vec<f64> {
    match precond {
        Some(d) => r.iter().zip(d).map(|(ri, di)| ri * di).collect(),
        None => r.to_vec(),
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Subtract the `w`-weighted mean so that `sum_i w_i v_i = 0`.
pub fn project_weighted_mean(v: &mut [f64], w: &[f64]) {
    let tot: f64 = w.iter().sum();
    let mean: f64 = v.iter().zip(w).map(|(vi, wi)| vi * wi).sum::<f64>() / tot;
    for vi in v.iter_mut() {
        *vi -= mean;
    }
}

/// Euclidean mean removal (projection off the constant kernel vector).
pub fn project_mean(v: &mut [f64]) {
    let mean: f64 = v.iter().sum::<f64>() / v.len() as f64;
    for vi in v.iter_mut() {
        *vi -= mean;
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn dense_apply(m: &[Vec<f64>]) -> impl Fn(&[f64]) -> Vec<f64> + '_ {
        move |v: &[f64]| {
            m.iter()
                .map(|row| row.iter().zip(v).map(|(a, b)| a * b).sum())
                .collect()
        }
    }

    #[test]
    fn solves_spd_system() {
        // diagonally dominant symmetric matrix
        let n = 20;
        let mut m = vec![vec![0.0; n]; n];
        for i in 0..n {
            for j in 0..n {
                m[i][j] = 1.0 / (1.0 + (i as f64 - j as f64).abs());
            }
            m[i][i] += n as f64;
        }
        let xtrue: Vec<f64> = (0..n).map(|i| (i as f64 * 0.7).sin()).collect();
        let b = dense_apply(&m)(&xtrue);
        let res = conjugate_gradient(dense_apply(&m), &b, None, 1e-13, 500).unwrap();
        for (a, c) in res.x.iter().zip(&xtrue) {
            assert!((a - c).abs() < 1e-10);
        }
    }

    #[test]
    fn handles_singular_compatible_system() {
        // cycle graph Laplacian: kernel = constants
        let n = 16;
        let mut m = vec![vec![0.0; n]; n];
        for i in 0..n {
            m[i][i] = 2.0;
            m[i][(i + 1) % n] = -1.0;
            m[i][(i + n - 1) % n] = -1.0;
        }
        let mut b: Vec<f64> = (0..n)
            .map(|i| (std::f64::consts::TAU * i as f64 / n as f64).sin())
            .collect();
        project_mean(&mut b);
        let res = conjugate_gradient(dense_apply(&m), &b, None, 1e-12, 200).unwrap();
        let back = dense_apply(&m)(&res.x);
        for (a, c) in back.iter().zip(&b) {
            assert!((a - c).abs() < 1e-9);
        }
    }

    #[test]
    fn jacobi_preconditioner_reduces_iterations() {
        let n = 64;
        let mut m = vec![vec![0.0; n]; n];
        for i in 0..n {
            m[i][i] = 1.0 + 100.0 * (i as f64 / n as f64);
            if i + 1 < n {
                m[i][i + 1] = -0.3;
                m[i + 1][i] = -0.3;
            }
        }
        let b: Vec<f64> = (0..n).map(|i| (i as f64).cos()).collect();
        let plain = conjugate_gradient(dense_apply(&m), &b, None, 1e-12, 10_000).unwrap();
        let inv_diag: Vec<f64> = (0..n).map(|i| 1.0 / m[i][i]).collect();
        let pre =
            conjugate_gradient(dense_apply(&m), &b, Some(&inv_diag), 1e-12, 10_000).unwrap();
        assert!(pre.iterations < plain.iterations);
        for (a, c) in pre.x.iter().zip(&plain.x) {
            assert!((a - c).abs() < 1e-8);
        }
    }

    #[test]
    fn weighted_mean_projection() {
        let w = vec![1.0, 2.0, 3.0];
        let mut v = vec![5.0, 5.0, 5.0];
        project_weighted_mean(&mut v, &w);
        let m: f64 = v.iter().zip(&w).map(|(a, b)| a * b).sum();
        assert!(m.abs() < 1e-12);
        assert!(v.iter().all(|x| x.abs() < 1e-12));
    }
}
