//! Matrix-free symmetric operators, power iteration and guarded solves.

use nalgebra::{DMatrix, DVector, SymmetricEigen};

use crate::error::{DpError, Result};

/// Condition-number limit of [`solve_spd`].
pub const CONDITION_LIMIT: f64 = 1e12;

/// A symmetric linear map applied without forming its matrix.
pub trait SymmetricOperator: Send + Sync {
    fn dim(&self) -> usize;
    fn apply(&self, x: &[f64], y: &mut [f64]);
}

/// `(q^{|i−j|})`, applied in O(n).
#[derive(Debug, Clone, Copy)]
pub struct ToeplitzOperator {
    pub decay: f64,
    pub dim: usize,
}

impl SymmetricOperator for ToeplitzOperator {
    fn dim(&self) -> usize {
        self.dim
    }

    fn apply(&self, x: &[f64], y: &mut [f64]) {
        let n = self.dim;
        let q = self.decay;
        let mut acc = 0.0;
        for i in 0..n {
            acc = x[i] + q * acc;
            y[i] = acc;
        }
        acc = 0.0;
        for i in (0..n).rev() {
            acc = x[i] + q * acc;
            y[i] += acc - x[i];
        }
    }
}

/// Variance `v` on the diagonal and covariance `c` elsewhere.
#[derive(Debug, Clone, Copy)]
pub struct EquicorrelatedOperator {
    pub variance: f64,
    pub covariance: f64,
    pub dim: usize,
}

impl SymmetricOperator for EquicorrelatedOperator {
    fn dim(&self) -> usize {
        self.dim
    }

    fn apply(&self, x: &[f64], y: &mut [f64]) {
        let s: f64 = x.iter().sum();
        for (yi, xi) in y.iter_mut().zip(x) {
            *yi = (self.variance - self.covariance) * xi + self.covariance * s;
        }
    }
}

/// Scaled identity.
#[derive(Debug, Clone, Copy)]
pub struct ScaledIdentity {
    pub scale: f64,
    pub dim: usize,
}

impl SymmetricOperator for ScaledIdentity {
    fn dim(&self) -> usize {
        self.dim
    }

    fn apply(&self, x: &[f64], y: &mut [f64]) {
        for (yi, xi) in y.iter_mut().zip(x) {
            *yi = self.scale * xi;
        }
    }
}

impl SymmetricOperator for DMatrix<f64> {
    fn dim(&self) -> usize {
        self.nrows()
    }

    fn apply(&self, x: &[f64], y: &mut [f64]) {
        let n = self.nrows();
        for (i, yi) in y.iter_mut().enumerate().take(n) {
            *yi = (0..n).map(|j| self[(i, j)] * x[j]).sum();
        }
    }
}

/// Direct sum of operators along the diagonal.
pub struct BlockDiagonalOperator {
    pub blocks: Vec<Box<dyn SymmetricOperator>>,
}

impl SymmetricOperator for BlockDiagonalOperator {
    fn dim(&self) -> usize {
        self.blocks.iter().map(|b| b.dim()).sum()
    }

    fn apply(&self, x: &[f64], y: &mut [f64]) {
        let mut off = 0;
        for b in &self.blocks {
            let d = b.dim();
            b.apply(&x[off..off + d], &mut y[off..off + d]);
            off += d;
        }
    }
}

/// `σ_U² 1 1ᵀ` on each group's block plus a per-user operator repeated along
/// the diagonal.
pub struct RandomEffectsOperator {
    pub sigma_u2: f64,
    pub group_sizes: Vec<usize>,
    pub t: usize,
    pub per_user: Box<dyn SymmetricOperator>,
}

impl SymmetricOperator for RandomEffectsOperator {
    fn dim(&self) -> usize {
        self.group_sizes.iter().sum::<usize>() * self.t
    }

    fn apply(&self, x: &[f64], y: &mut [f64]) {
        let t = self.t;
        let mut off = 0;
        for &g in &self.group_sizes {
            let len = g * t;
            let s: f64 = x[off..off + len].iter().sum();
            for u in 0..g {
                let r = off + u * t..off + (u + 1) * t;
                self.per_user.apply(&x[r.clone()], &mut y[r]);
            }
            for yi in &mut y[off..off + len] {
                *yi += self.sigma_u2 * s;
            }
            off += len;
        }
    }
}

/// Densifies an operator by applying it to the unit vectors.
pub fn to_dense(op: &dyn SymmetricOperator) -> DMatrix<f64> {
    let n = op.dim();
    let mut m = DMatrix::zeros(n, n);
    let mut e = vec![0.0; n];
    let mut col = vec![0.0; n];
    for j in 0..n {
        e[j] = 1.0;
        op.apply(&e, &mut col);
        for i in 0..n {
            m[(i, j)] = col[i];
        }
        e[j] = 0.0;
    }
    m
}

/// Largest-magnitude eigenvalue by power iteration. Stops when the Rayleigh
/// quotient changes by less than `tol` relative, errors after `max_iter`.
pub fn power_iteration(op: &dyn SymmetricOperator, tol: f64, max_iter: usize) -> Result<f64> {
    let n = op.dim();
    if n == 0 {
        return Err(DpError::InvalidInput("empty operator".into()));
    }
    let mut v: Vec<f64> = (0..n).map(|i| 1.0 + 0.1 * ((i as f64 + 1.0) * 0.7548776662).sin()).collect();
    normalize(&mut v);
    let mut w = vec![0.0; n];
    let mut lambda = f64::NAN;
    for _ in 0..max_iter {
        op.apply(&v, &mut w);
        let rq: f64 = v.iter().zip(&w).map(|(a, b)| a * b).sum();
        let norm = w.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm == 0.0 {
            return Ok(0.0);
        }
        if lambda.is_finite() && (rq - lambda).abs() <= tol * rq.abs().max(f64::MIN_POSITIVE) {
            return Ok(rq);
        }
        lambda = rq;
        for (vi, wi) in v.iter_mut().zip(&w) {
            *vi = wi / norm;
        }
    }
    Err(DpError::Numeric(format!("power iteration did not converge in {max_iter} iterations")))
}

fn normalize(v: &mut [f64]) {
    let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    for x in v {
        *x /= norm;
    }
}

/// Spectral condition number of a symmetric matrix (∞ when singular or
/// indefinite).
pub fn spd_condition(a: &DMatrix<f64>) -> f64 {
    let eig = SymmetricEigen::new(a.clone());
    let max = eig.eigenvalues.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let min = eig.eigenvalues.iter().cloned().fold(f64::INFINITY, f64::min);
    if min <= 0.0 || !min.is_finite() {
        f64::INFINITY
    } else {
        max / min
    }
}

/// Solves `A X = B` for symmetric positive definite `A`, refusing matrices
/// whose condition number exceeds [`CONDITION_LIMIT`].
pub fn solve_spd(a: &DMatrix<f64>, b: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let condition = spd_condition(a);
    if condition > CONDITION_LIMIT {
        return Err(DpError::SingularDesign { condition, limit: CONDITION_LIMIT });
    }
    let chol = a
        .clone()
        .cholesky()
        .ok_or(DpError::SingularDesign { condition, limit: CONDITION_LIMIT })?;
    Ok(chol.solve(b))
}

/// Inverse of a well-conditioned SPD matrix.
pub fn inverse_spd(a: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    solve_spd(a, &DMatrix::identity(a.nrows(), a.nrows()))
}

pub fn solve_spd_vec(a: &DMatrix<f64>, b: &DVector<f64>) -> Result<DVector<f64>> {
    let m = solve_spd(a, &DMatrix::from_column_slice(b.len(), 1, b.as_slice()))?;
    Ok(m.column(0).into_owned())
}

/// Smallest eigenvalue of a symmetric matrix.
pub fn min_eigenvalue(a: &DMatrix<f64>) -> f64 {
    let sym = (a + a.transpose()) * 0.5;
    SymmetricEigen::new(sym).eigenvalues.iter().cloned().fold(f64::INFINITY, f64::min)
}

/// Largest eigenvalue of a symmetric matrix.
pub fn max_eigenvalue(a: &DMatrix<f64>) -> f64 {
    let sym = (a + a.transpose()) * 0.5;
    SymmetricEigen::new(sym).eigenvalues.iter().cloned().fold(f64::NEG_INFINITY, f64::max)
}
