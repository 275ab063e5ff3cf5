//! Jacobi-preconditioned Krylov solvers for the sparse non-symmetric systems
//! produced by Newton linearization.
//!
//! BiCGSTAB is tried first; on breakdown or stagnation the solve restarts
//! from the BiCGSTAB iterate with restarted GMRES.

use thiserror::Error;

use crate::sparse::CsrMatrix;

#[derive(Debug, Error)]
pub enum LinearSolveError {
    #[error("Krylov solve did not converge: relative residual {residual:e} after {iterations} iterations")]
    NotConverged { residual: f64, iterations: usize },
    #[error("zero or non-finite diagonal entry in row {0}")]
    BadDiagonal(usize),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KrylovOptions {
    pub rel_tol: f64,
    pub max_iter: usize,
    pub restart: usize,
}

impl Default for KrylovOptions {
    fn default() -> Self {
        KrylovOptions {
            rel_tol: 1e-10,
            max_iter: 2000,
            restart: 60,
        }
    }
}

#[derive(Debug, Clone, Copy)]
pub struct KrylovStats {
    pub iterations: usize,
    pub relative_residual: f64,
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

fn jacobi(a: &CsrMatrix) -> Result<Vec<f64>, LinearSolveError> {
    a.diagonal()
        .into_iter()
        .enumerate()
        .map(|(i, d)| {
            if d != 0.0 && d.is_finite() {
                Ok(1.0 / d)
            } else {
                Err(LinearSolveError::BadDiagonal(i))
            }
        })
        .collect()
}

/// Solves `A x = b`, using `x` as the initial guess.
pub fn solve(
    a: &CsrMatrix,
    b: &[f64],
    x: &mut [f64],
    opts: &KrylovOptions,
) -> Result<KrylovStats, LinearSolveError> {
    let inv_diag = jacobi(a)?;
    let bnorm = norm(b);
    if bnorm == 0.0 {
        x.iter_mut().for_each(|v| *v = 0.0);
        return Ok(KrylovStats {
            iterations: 0,
            relative_residual: 0.0,
        });
    }
    let target = opts.rel_tol * bnorm;
    let stats = bicgstab(a, b, x, &inv_diag, target, opts.max_iter);
    if stats.relative_residual * bnorm <= target {
        return Ok(stats);
    }
    log::debug!(
        "BiCGSTAB stalled at {:e} after {} iterations, switching to GMRES",
        stats.relative_residual,
        stats.iterations
    );
    let g = gmres(a, b, x, &inv_diag, target, opts.max_iter, opts.restart);
    if g.relative_residual * bnorm <= target {
        Ok(KrylovStats {
            iterations: stats.iterations + g.iterations,
            relative_residual: g.relative_residual,
        })
    } else {
        Err(LinearSolveError::NotConverged {
            residual: g.relative_residual,
            iterations: stats.iterations + g.iterations,
        })
    }
}

fn residual(a: &CsrMatrix, b: &[f64], x: &[f64], r: &mut [f64]) {
    a.mul_vec_into(x, r);
    for (ri, bi) in r.iter_mut().zip(b) {
        *ri = bi - *ri;
    }
}

fn bicgstab(
    a: &CsrMatrix,
    b: &[f64],
    x: &mut [f64],
    inv_diag: &[f64],
    target: f64,
    max_iter: usize,
) -> KrylovStats {
    let n = b.len();
    let bnorm = norm(b);
    let mut r = vec![0.0; n];
    residual(a, b, x, &mut r);
    let r_hat = r.clone();
    let mut rho = 1.0;
    let mut alpha = 1.0;
    let mut omega = 1.0;
    let mut v = vec![0.0; n];
    let mut p = vec![0.0; n];
    let mut y = vec![0.0; n];
    let mut z = vec![0.0; n];
    let mut s = vec![0.0; n];
    let mut t = vec![0.0; n];
    let mut rnorm = norm(&r);
    let mut it = 0;
    while it < max_iter && rnorm > target {
        it += 1;
        let rho_new = dot(&r_hat, &r);
        if rho_new == 0.0 || omega == 0.0 || !rho_new.is_finite() {
            break;
        }
        let beta = (rho_new / rho) * (alpha / omega);
        rho = rho_new;
        for i in 0..n {
            p[i] = r[i] + beta * (p[i] - omega * v[i]);
            y[i] = p[i] * inv_diag[i];
        }
        a.mul_vec_into(&y, &mut v);
        let denom = dot(&r_hat, &v);
        if denom == 0.0 || !denom.is_finite() {
            break;
        }
        alpha = rho / denom;
        for i in 0..n {
            s[i] = r[i] - alpha * v[i];
        }
        if norm(&s) <= target {
            for i in 0..n {
                x[i] += alpha * y[i];
            }
            break;
        }
        for i in 0..n {
            z[i] = s[i] * inv_diag[i];
        }
        a.mul_vec_into(&z, &mut t);
        let tt = dot(&t, &t);
        omega = if tt > 0.0 { dot(&t, &s) / tt } else { 0.0 };
        for i in 0..n {
            x[i] += alpha * y[i] + omega * z[i];
            r[i] = s[i] - omega * t[i];
        }
        rnorm = norm(&r);
    }
    // Report the true residual, not the recurrence one.
    residual(a, b, x, &mut r);
    KrylovStats {
        iterations: it,
        relative_residual: norm(&r) / bnorm,
    }
}

/// Right-preconditioned restarted GMRES with modified Gram-Schmidt.
fn gmres(
    a: &CsrMatrix,
    b: &[f64],
    x: &mut [f64],
    inv_diag: &[f64],
    target: f64,
    max_iter: usize,
    restart: usize,
) -> KrylovStats {
    let n = b.len();
    let bnorm = norm(b);
    let m = restart.max(1);
    let mut r = vec![0.0; n];
    let mut w = vec![0.0; n];
    let mut zbuf = vec![0.0; n];
    let mut total = 0;
    loop {
        residual(a, b, x, &mut r);
        let beta = norm(&r);
        if beta <= target || total >= max_iter {
            return KrylovStats {
                iterations: total,
                relative_residual: beta / bnorm,
            };
        }
        let mut basis: Vec<Vec<f64>> = Vec::with_capacity(m + 1);
        basis.push(r.iter().map(|v| v / beta).collect());
        let mut h = vec![vec![0.0; m]; m + 1];
        let mut cs = vec![0.0; m];
        let mut sn = vec![0.0; m];
        let mut g = vec![0.0; m + 1];
        g[0] = beta;
        let mut k_used = 0;
        for k in 0..m {
            if total >= max_iter {
                break;
            }
            total += 1;
            for i in 0..n {
                zbuf[i] = basis[k][i] * inv_diag[i];
            }
            a.mul_vec_into(&zbuf, &mut w);
            for (j, vj) in basis.iter().enumerate() {
                let hj = dot(&w, vj);
                h[j][k] = hj;
                for i in 0..n {
                    w[i] -= hj * vj[i];
                }
            }
            let hn = norm(&w);
            h[k + 1][k] = hn;
            for j in 0..k {
                let tmp = cs[j] * h[j][k] + sn[j] * h[j + 1][k];
                h[j + 1][k] = -sn[j] * h[j][k] + cs[j] * h[j + 1][k];
                h[j][k] = tmp;
            }
            let denom = (h[k][k] * h[k][k] + h[k + 1][k] * h[k + 1][k]).sqrt();
            if denom == 0.0 {
                break;
            }
            cs[k] = h[k][k] / denom;
            sn[k] = h[k + 1][k] / denom;
            h[k][k] = denom;
            h[k + 1][k] = 0.0;
            g[k + 1] = -sn[k] * g[k];
            g[k] *= cs[k];
            k_used = k + 1;
            if g[k + 1].abs() <= target || hn == 0.0 {
                break;
            }
            basis.push(w.iter().map(|v| v / hn).collect());
        }
        if k_used == 0 {
            return KrylovStats {
                iterations: total,
                relative_residual: beta / bnorm,
            };
        }
        let mut yk = vec![0.0; k_used];
        for i in (0..k_used).rev() {
            let mut s = g[i];
            for j in i + 1..k_used {
                s -= h[i][j] * yk[j];
            }
            yk[i] = s / h[i][i];
        }
        for (j, yj) in yk.iter().enumerate() {
            for i in 0..n {
                x[i] += yj * basis[j][i] * inv_diag[i];
            }
        }
    }
}
