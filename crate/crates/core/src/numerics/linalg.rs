//! Small symmetric positive-definite solvers used by the linear probe.

use crate::error::{Error, Result};

/// Solves `A x = b` for each column of `b` (row-major `[n, r]`) by Cholesky factorisation.
/// `a` is row-major `[n, n]`.
pub fn cholesky_solve(a: &[f64], n: usize, b: &[f64], r: usize) -> Result<Vec<f64>> {
    let mut l = vec![0.0; n * n];
    for i in 0..n {
        for j in 0..=i {
            let mut s = a[i * n + j];
            for k in 0..j {
                s -= l[i * n + k] * l[j * n + k];
            }
            if i == j {
                if s <= 0.0 || !s.is_finite() {
                    return Err(Error::Numeric(format!(
                        "matrix is not positive definite (pivot {i} = {s:e})"
                    )));
                }
                l[i * n + i] = s.sqrt();
            } else {
                l[i * n + j] = s / l[j * n + j];
            }
        }
    }
    let mut x = b.to_vec();
    for c in 0..r {
        // forward: L y = b
        for i in 0..n {
            let mut s = x[i * r + c];
            for k in 0..i {
                s -= l[i * n + k] * x[k * r + c];
            }
            x[i * r + c] = s / l[i * n + i];
        }
        // backward: L^T x = y
        for i in (0..n).rev() {
            let mut s = x[i * r + c];
            for k in i + 1..n {
                s -= l[k * n + i] * x[k * r + c];
            }
            x[i * r + c] = s / l[i * n + i];
        }
    }
    Ok(x)
}

/// Conjugate gradients on `A x = b` (single right-hand side) until the residual norm
/// falls below `tol * |b|` or `max_iter` is reached. Returns the solution and the
/// number of iterations used.
pub fn conjugate_gradient(
    a: &[f64],
    n: usize,
    b: &[f64],
    tol: f64,
    max_iter: usize,
) -> (Vec<f64>, usize) {
    let matvec = |v: &[f64], out: &mut [f64]| {
        for i in 0..n {
            out[i] = a[i * n..(i + 1) * n].iter().zip(v).map(|(p, q)| p * q).sum();
        }
    };
    let dot = |u: &[f64], v: &[f64]| u.iter().zip(v).map(|(p, q)| p * q).sum::<f64>();
    let mut x = vec![0.0; n];
    let mut r = b.to_vec();
    let mut p = r.clone();
    let mut ap = vec![0.0; n];
    let bnorm = dot(b, b).sqrt().max(1e-300);
    let mut rs = dot(&r, &r);
    let mut it = 0;
    while it < max_iter && rs.sqrt() > tol * bnorm {
        matvec(&p, &mut ap);
        let alpha = rs / dot(&p, &ap);
        for i in 0..n {
            x[i] += alpha * p[i];
            r[i] -= alpha * ap[i];
        }
        let rs_new = dot(&r, &r);
        let beta = rs_new / rs;
        for i in 0..n {
            p[i] = r[i] + beta * p[i];
        }
        rs = rs_new;
        it += 1;
    }
    (x, it)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn spd(n: usize) -> Vec<f64> {
        let mut m = vec![0.0; n * n];
        for i in 0..n {
            for j in 0..n {
                let v = ((i * 7 + j * 3) % 5) as f64 * 0.1;
                m[i * n + j] += v;
                m[j * n + i] += v;
            }
            m[i * n + i] += n as f64;
        }
        m
    }

    #[test]
    fn cholesky_and_cg_agree() {
        let n = 6;
        let a = spd(n);
        let b: Vec<f64> = (0..n).map(|i| i as f64 - 2.0).collect();
        let x1 = cholesky_solve(&a, n, &b, 1).unwrap();
        let (x2, _) = conjugate_gradient(&a, n, &b, 1e-12, 100);
        for (p, q) in x1.iter().zip(&x2) {
            assert!((p - q).abs() < 1e-9);
        }
        for i in 0..n {
            let ax: f64 = (0..n).map(|j| a[i * n + j] * x1[j]).sum();
            assert!((ax - b[i]).abs() < 1e-10);
        }
    }

    #[test]
    fn singular_matrix_is_rejected() {
        let a = vec![1.0, 1.0, 1.0, 1.0];
        assert!(cholesky_solve(&a, 2, &[1.0, 1.0], 1).is_err());
    }
}
