//! Sparse symmetric storage and the linear solvers used throughout the crate.
//!
//! Every system solved here is symmetric positive semidefinite with kernel
//! spanned by the constant vector (graph Laplacians, Neumann stiffness
//! matrices). The zero-mean gauge is enforced structurally:
//!
//! * below [`DENSE_LIMIT`] unknowns, a dense Cholesky factorization of
//!   `K + (s/n)·11ᵀ` is used — the rank-one completion makes the matrix
//!   positive definite and forces the algebraic mean of the solution to zero;
//! * at or above the limit, conjugate gradients with Jacobi preconditioning,
//!   deflating the constant vector from the residual every iteration.
//!
//! Both paths are deterministic.

use crate::error::Error;
use crate::Result;

/// Direct dense solves below this number of unknowns, CG at or above it.
pub const DENSE_LIMIT: usize = 200;

/// Relative residual target for the iterative path.
pub const CG_TOLERANCE: f64 = 1e-12;

/// Symmetric sparse matrix in compressed-row storage (full pattern stored).
#[derive(Debug, Clone)]
pub struct SparseSym {
    pub n: usize,
    pub row_ptr: Vec<usize>,
    pub col_idx: Vec<usize>,
    pub values: Vec<f64>,
}

impl SparseSym {
    /// Assemble from (row, col, value) triplets; duplicates are summed.
    pub fn from_triplets(n: usize, triplets: &[(usize, usize, f64)]) -> Self {
        let mut per_row: Vec<Vec<(usize, f64)>> = vec![Vec::new(); n];
        for &(i, j, v) in triplets {
            per_row[i].push((j, v));
        }
        let mut row_ptr = Vec::with_capacity(n + 1);
        let mut col_idx = Vec::new();
        let mut values = Vec::new();
        row_ptr.push(0);
        for row in &mut per_row {
            row.sort_by_key(|&(j, _)| j);
            let mut last: Option<usize> = None;
            for &(j, v) in row.iter() {
                if last == Some(j) {
                    *values.last_mut().unwrap() += v;
                } else {
                    col_idx.push(j);
                    values.push(v);
                    last = Some(j);
                }
            }
            row_ptr.push(col_idx.len());
        }
        SparseSym {
            n,
            row_ptr,
            col_idx,
            values,
        }
    }

    pub fn mul_vec(&self, x: &[f64], out: &mut [f64]) {
        for i in 0..self.n {
            let mut acc = 0.0;
            for k in self.row_ptr[i]..self.row_ptr[i + 1] {
                acc += self.values[k] * x[self.col_idx[k]];
            }
            out[i] = acc;
        }
    }

    pub fn diagonal(&self) -> Vec<f64> {
        let mut d = vec![0.0; self.n];
        for i in 0..self.n {
            for k in self.row_ptr[i]..self.row_ptr[i + 1] {
                if self.col_idx[k] == i {
                    d[i] = self.values[k];
                }
            }
        }
        d
    }

    pub fn to_dense(&self) -> Vec<f64> {
        let n = self.n;
        let mut a = vec![0.0; n * n];
        for i in 0..n {
            for k in self.row_ptr[i]..self.row_ptr[i + 1] {
                a[i * n + self.col_idx[k]] = self.values[k];
            }
        }
        a
    }

    /// Maximum absolute row sum; zero for matrices with constants in the kernel.
    pub fn max_abs_row_sum(&self) -> f64 {
        (0..self.n)
            .map(|i| {
                (self.row_ptr[i]..self.row_ptr[i + 1])
                    .map(|k| self.values[k])
                    .sum::<f64>()
                    .abs()
            })
            .fold(0.0, f64::max)
    }
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn norm2(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

fn subtract_mean(x: &mut [f64]) {
    let m = x.iter().sum::<f64>() / x.len() as f64;
    for v in x.iter_mut() {
        *v -= m;
    }
}

/// In-place dense Cholesky factorization (lower triangle of `a`, row-major n×n).
fn cholesky_factor(a: &mut [f64], n: usize) -> Result<()> {
    for j in 0..n {
        let mut d = a[j * n + j];
        for k in 0..j {
            d -= a[j * n + k] * a[j * n + k];
        }
        if d <= 0.0 {
            return Err(Error::NoConvergence {
                context: format!("dense Cholesky hit non-positive pivot at column {j}"),
                iterations: j,
                residual: d,
            });
        }
        let dj = d.sqrt();
        a[j * n + j] = dj;
        for i in (j + 1)..n {
            let mut s = a[i * n + j];
            for k in 0..j {
                s -= a[i * n + k] * a[j * n + k];
            }
            a[i * n + j] = s / dj;
        }
    }
    Ok(())
}

fn cholesky_solve(l: &[f64], n: usize, b: &[f64]) -> Vec<f64> {
    let mut y = vec![0.0; n];
    for i in 0..n {
        let mut s = b[i];
        for k in 0..i {
            s -= l[i * n + k] * y[k];
        }
        y[i] = s / l[i * n + i];
    }
    let mut x = vec![0.0; n];
    for i in (0..n).rev() {
        let mut s = y[i];
        for k in (i + 1)..n {
            s -= l[k * n + i] * x[k];
        }
        x[i] = s / l[i * n + i];
    }
    x
}

/// Dense SPD solve for a general (non-singular) system.
pub fn solve_dense_spd(matrix: &[f64], n: usize, rhs: &[f64]) -> Result<Vec<f64>> {
    let mut a = matrix.to_vec();
    cholesky_factor(&mut a, n)?;
    Ok(cholesky_solve(&a, n, rhs))
}

/// Solve the singular system `K x = b` (kernel = constants, `b` balanced),
/// returning the solution with zero algebraic mean.
pub fn solve_singular_spsd(matrix: &SparseSym, rhs: &[f64]) -> Result<Vec<f64>> {
    let n = matrix.n;
    if n == 0 {
        return Ok(Vec::new());
    }
    if n == 1 {
        return Ok(vec![0.0]);
    }
    if n < DENSE_LIMIT {
        // Rank-one completion: (K + (s/n) 11ᵀ) x = b has the zero-mean solution
        // because 1ᵀb = 0 forces 1ᵀx = 0. The shift s is scaled to the matrix.
        let mut a = matrix.to_dense();
        let diag = matrix.diagonal();
        let s = diag.iter().cloned().fold(0.0, f64::max).max(1.0);
        let shift = s / n as f64;
        for v in a.iter_mut() {
            *v += shift;
        }
        cholesky_factor(&mut a, n)?;
        let mut x = cholesky_solve(&a, n, rhs);
        subtract_mean(&mut x);
        Ok(x)
    } else {
        solve_cg_deflated(matrix, rhs, CG_TOLERANCE, 40 * n)
    }
}

/// Preconditioned CG on a consistent singular system, deflating the constant
/// vector from the residual on every iteration (D-12).
pub fn solve_cg_deflated(
    matrix: &SparseSym,
    rhs: &[f64],
    rel_tol: f64,
    max_iter: usize,
) -> Result<Vec<f64>> {
    let n = matrix.n;
    let mut b = rhs.to_vec();
    subtract_mean(&mut b);
    let b_norm = norm2(&b);
    if b_norm == 0.0 {
        return Ok(vec![0.0; n]);
    }
    let diag = matrix.diagonal();
    let inv_diag: Vec<f64> = diag
        .iter()
        .map(|&d| if d > 0.0 { 1.0 / d } else { 1.0 })
        .collect();

    let mut x = vec![0.0; n];
    let mut r = b.clone();
    let mut z: Vec<f64> = r.iter().zip(&inv_diag).map(|(ri, di)| ri * di).collect();
    subtract_mean(&mut z);
    let mut p = z.clone();
    let mut rz = dot(&r, &z);
    let mut ap = vec![0.0; n];

    for it in 0..max_iter {
        matrix.mul_vec(&p, &mut ap);
        let pap = dot(&p, &ap);
        if pap <= 0.0 {
            return Err(Error::NoConvergence {
                context: "CG encountered a non-positive curvature direction".into(),
                iterations: it,
                residual: norm2(&r) / b_norm,
            });
        }
        let alpha = rz / pap;
        for i in 0..n {
            x[i] += alpha * p[i];
            r[i] -= alpha * ap[i];
        }
        subtract_mean(&mut r);
        if norm2(&r) <= rel_tol * b_norm {
            subtract_mean(&mut x);
            return Ok(x);
        }
        for i in 0..n {
            z[i] = r[i] * inv_diag[i];
        }
        subtract_mean(&mut z);
        let rz_new = dot(&r, &z);
        let beta = rz_new / rz;
        rz = rz_new;
        for i in 0..n {
            p[i] = z[i] + beta * p[i];
        }
    }
    Err(Error::NoConvergence {
        context: "CG exceeded the iteration limit".into(),
        iterations: max_iter,
        residual: norm2(&r) / b_norm,
    })
}

/// Preconditioned CG for a positive definite (non-singular) system.
pub fn solve_cg_spd(
    matrix: &SparseSym,
    rhs: &[f64],
    rel_tol: f64,
    max_iter: usize,
) -> Result<Vec<f64>> {
    let n = matrix.n;
    let b_norm = norm2(rhs);
    if b_norm == 0.0 {
        return Ok(vec![0.0; n]);
    }
    let diag = matrix.diagonal();
    let inv_diag: Vec<f64> = diag
        .iter()
        .map(|&d| if d > 0.0 { 1.0 / d } else { 1.0 })
        .collect();
    let mut x = vec![0.0; n];
    let mut r = rhs.to_vec();
    let mut z: Vec<f64> = r.iter().zip(&inv_diag).map(|(ri, di)| ri * di).collect();
    let mut p = z.clone();
    let mut rz = dot(&r, &z);
    let mut ap = vec![0.0; n];
    for it in 0..max_iter {
        matrix.mul_vec(&p, &mut ap);
        let pap = dot(&p, &ap);
        if pap <= 0.0 {
            return Err(Error::NoConvergence {
                context: "CG encountered a non-positive curvature direction".into(),
                iterations: it,
                residual: norm2(&r) / b_norm,
            });
        }
        let alpha = rz / pap;
        for i in 0..n {
            x[i] += alpha * p[i];
            r[i] -= alpha * ap[i];
        }
        if norm2(&r) <= rel_tol * b_norm {
            return Ok(x);
        }
        for i in 0..n {
            z[i] = r[i] * inv_diag[i];
        }
        let rz_new = dot(&r, &z);
        let beta = rz_new / rz;
        rz = rz_new;
        for i in 0..n {
            p[i] = z[i] + beta * p[i];
        }
    }
    Err(Error::NoConvergence {
        context: "CG exceeded the iteration limit".into(),
        iterations: max_iter,
        residual: norm2(&r) / b_norm,
    })
}

/// Least-squares slope fit of `ln y` against `ln x`; returns (slope, r_squared).
pub fn log_log_fit(x: &[f64], y: &[f64]) -> (f64, f64) {
    let lx: Vec<f64> = x.iter().map(|v| v.ln()).collect();
    let ly: Vec<f64> = y.iter().map(|v| v.ln()).collect();
    let n = lx.len() as f64;
    let mx = lx.iter().sum::<f64>() / n;
    let my = ly.iter().sum::<f64>() / n;
    let sxx: f64 = lx.iter().map(|v| (v - mx) * (v - mx)).sum();
    let sxy: f64 = lx.iter().zip(&ly).map(|(a, b)| (a - mx) * (b - my)).sum();
    let syy: f64 = ly.iter().map(|v| (v - my) * (v - my)).sum();
    let slope = sxy / sxx;
    let r2 = if syy == 0.0 { 1.0 } else { sxy * sxy / (sxx * syy) };
    (slope, r2)
}
