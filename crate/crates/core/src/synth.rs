//! Structured Gaussian covariances, their log-Sobolev constants, and the
//! samplers used by the experiments.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{invalid_param, DpError, Result};
use crate::linalg::{
    power_iteration, to_dense, BlockDiagonalOperator, EquicorrelatedOperator, RandomEffectsOperator,
    ScaledIdentity, SymmetricOperator, ToeplitzOperator,
};
use crate::nonparam::FixedDesign;
use crate::user_level::{RegressionDataset, UserDataMatrix};

const PSD_TOLERANCE: f64 = 1e-8;
const POWER_TOL: f64 = 1e-9;
const POWER_MAX_ITER: usize = 10_000;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum CovarianceKind {
    Identity,
    Toeplitz { decay: f64 },
    Equicorrelated { variance: f64, covariance: f64 },
    BlockDiagonal { blocks: Vec<CovarianceSpec> },
    RandomEffects { sigma_u2: f64, group_sizes: Vec<usize>, t: usize, per_user: Box<CovarianceSpec> },
    Explicit { matrix: Vec<Vec<f64>> },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CovarianceSpec {
    pub kind: CovarianceKind,
    pub dimension: usize,
}

impl CovarianceSpec {
    pub fn identity(dimension: usize) -> Self {
        Self { kind: CovarianceKind::Identity, dimension }
    }

    pub fn toeplitz(decay: f64, dimension: usize) -> Self {
        Self { kind: CovarianceKind::Toeplitz { decay }, dimension }
    }

    pub fn equicorrelated(variance: f64, covariance: f64, dimension: usize) -> Self {
        Self { kind: CovarianceKind::Equicorrelated { variance, covariance }, dimension }
    }

    pub fn block_diagonal(blocks: Vec<CovarianceSpec>) -> Self {
        let dimension = blocks.iter().map(|b| b.dimension).sum();
        Self { kind: CovarianceKind::BlockDiagonal { blocks }, dimension }
    }

    pub fn random_effects(sigma_u2: f64, group_sizes: Vec<usize>, t: usize, per_user: CovarianceSpec) -> Self {
        let dimension = group_sizes.iter().sum::<usize>() * t;
        Self { kind: CovarianceKind::RandomEffects { sigma_u2, group_sizes, t, per_user: Box::new(per_user) }, dimension }
    }

    pub fn explicit(matrix: &DMatrix<f64>) -> Self {
        let rows = (0..matrix.nrows()).map(|i| matrix.row(i).iter().copied().collect()).collect();
        Self { kind: CovarianceKind::Explicit { matrix: rows }, dimension: matrix.nrows() }
    }

    pub fn validate(&self) -> Result<()> {
        if self.dimension == 0 {
            return Err(invalid_param("covariance dimension must be positive"));
        }
        match &self.kind {
            CovarianceKind::Identity => Ok(()),
            CovarianceKind::Toeplitz { decay } => {
                if !(decay.abs() < 1.0) {
                    return Err(invalid_param(format!("Toeplitz decay must lie in (-1, 1), got {decay}")));
                }
                Ok(())
            }
            CovarianceKind::Equicorrelated { variance, covariance } => {
                let lower = if self.dimension > 1 { -variance / (self.dimension - 1) as f64 } else { f64::NEG_INFINITY };
                if !(*variance >= 0.0) || *covariance < lower || covariance > variance {
                    return Err(invalid_param(format!(
                        "equicorrelated covariance {covariance} must lie in [{lower}, {variance}]"
                    )));
                }
                Ok(())
            }
            CovarianceKind::BlockDiagonal { blocks } => {
                if blocks.is_empty() {
                    return Err(invalid_param("block_diagonal needs at least one block"));
                }
                for b in blocks {
                    b.validate()?;
                }
                let total: usize = blocks.iter().map(|b| b.dimension).sum();
                if total != self.dimension {
                    return Err(invalid_param(format!("blocks sum to {total}, dimension is {}", self.dimension)));
                }
                Ok(())
            }
            CovarianceKind::RandomEffects { sigma_u2, group_sizes, t, per_user } => {
                if !(*sigma_u2 >= 0.0) {
                    return Err(invalid_param(format!("sigma_u2 must be nonnegative, got {sigma_u2}")));
                }
                if group_sizes.is_empty() || group_sizes.contains(&0) || *t == 0 {
                    return Err(invalid_param("group sizes and T must be positive"));
                }
                per_user.validate()?;
                if per_user.dimension != *t {
                    return Err(invalid_param(format!("per-user spec has dimension {}, T is {t}", per_user.dimension)));
                }
                let total = group_sizes.iter().sum::<usize>() * t;
                if total != self.dimension {
                    return Err(invalid_param(format!("random effects dimension {total} != {}", self.dimension)));
                }
                Ok(())
            }
            CovarianceKind::Explicit { matrix } => {
                if matrix.len() != self.dimension || matrix.iter().any(|r| r.len() != self.dimension) {
                    return Err(DpError::ShapeMismatch(format!("explicit matrix must be {0}x{0}", self.dimension)));
                }
                if matrix.iter().flatten().any(|v| !v.is_finite()) {
                    return Err(invalid_param("explicit matrix has non-finite entries"));
                }
                Ok(())
            }
        }
    }

    fn explicit_matrix(matrix: &[Vec<f64>]) -> DMatrix<f64> {
        let n = matrix.len();
        let m = DMatrix::from_fn(n, n, |i, j| matrix[i][j]);
        (&m + m.transpose()) * 0.5
    }

    /// Matrix-free view of the covariance.
    pub fn operator(&self) -> Result<Box<dyn SymmetricOperator>> {
        self.validate()?;
        let n = self.dimension;
        Ok(match &self.kind {
            CovarianceKind::Identity => Box::new(ScaledIdentity { scale: 1.0, dim: n }),
            CovarianceKind::Toeplitz { decay } => Box::new(ToeplitzOperator { decay: *decay, dim: n }),
            CovarianceKind::Equicorrelated { variance, covariance } => {
                Box::new(EquicorrelatedOperator { variance: *variance, covariance: *covariance, dim: n })
            }
            CovarianceKind::BlockDiagonal { blocks } => Box::new(BlockDiagonalOperator {
                blocks: blocks.iter().map(|b| b.operator()).collect::<Result<_>>()?,
            }),
            CovarianceKind::RandomEffects { sigma_u2, group_sizes, t, per_user } => Box::new(RandomEffectsOperator {
                sigma_u2: *sigma_u2,
                group_sizes: group_sizes.clone(),
                t: *t,
                per_user: per_user.operator()?,
            }),
            CovarianceKind::Explicit { matrix } => Box::new(Self::explicit_matrix(matrix)),
        })
    }

    /// Diagonal entries of the covariance.
    pub fn diagonal(&self) -> Result<Vec<f64>> {
        self.validate()?;
        let n = self.dimension;
        Ok(match &self.kind {
            CovarianceKind::Identity | CovarianceKind::Toeplitz { .. } => vec![1.0; n],
            CovarianceKind::Equicorrelated { variance, .. } => vec![*variance; n],
            CovarianceKind::BlockDiagonal { blocks } => {
                let mut d = Vec::with_capacity(n);
                for b in blocks {
                    d.extend(b.diagonal()?);
                }
                d
            }
            CovarianceKind::RandomEffects { sigma_u2, group_sizes, per_user, .. } => {
                let per = per_user.diagonal()?;
                let users: usize = group_sizes.iter().sum();
                let mut d = Vec::with_capacity(n);
                for _ in 0..users {
                    d.extend(per.iter().map(|v| v + sigma_u2));
                }
                d
            }
            CovarianceKind::Explicit { matrix } => (0..n).map(|i| matrix[i][i]).collect(),
        })
    }
}

/// Dense covariance matrix.
pub fn build_covariance(spec: &CovarianceSpec) -> Result<DMatrix<f64>> {
    let m = to_dense(spec.operator()?.as_ref());
    if let CovarianceKind::Explicit { .. } = spec.kind {
        let min = crate::linalg::min_eigenvalue(&m);
        if min < -PSD_TOLERANCE {
            return Err(invalid_param(format!("covariance is not PSD: min eigenvalue {min:.3e}")));
        }
    }
    Ok(m)
}

/// Gaussian log-Sobolev constant `ρ = ‖Σ‖op` and the marginal constants.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DependenceInfo {
    pub rho: f64,
    pub marginal_rhos: Vec<f64>,
}

pub fn log_sobolev_constant(spec: &CovarianceSpec) -> Result<DependenceInfo> {
    let op = spec.operator()?;
    let marginal_rhos = spec.diagonal()?;
    let rho = power_iteration(op.as_ref(), POWER_TOL, POWER_MAX_ITER)?;
    let max_diag = marginal_rhos.iter().cloned().fold(0.0, f64::max);
    Ok(DependenceInfo { rho: rho.max(max_diag), marginal_rhos })
}

enum Factor {
    Identity,
    Toeplitz(f64),
    Equicorrelated { within: f64, along: f64 },
    Dense(DMatrix<f64>),
    Blocks(Vec<GaussianSampler>),
    RandomEffects { sigma_u: f64, group_sizes: Vec<usize>, t: usize, per_user: Box<GaussianSampler> },
}

/// Prepared sampler for `N(0, Σ)`; reuse it across many draws.
pub struct GaussianSampler {
    dim: usize,
    factor: Factor,
}

fn dense_factor(m: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    if let Some(ch) = m.clone().cholesky() {
        return Ok(ch.l());
    }
    let eig = SymmetricEigen::new(m.clone());
    let min = eig.eigenvalues.iter().cloned().fold(f64::INFINITY, f64::min);
    if min < -PSD_TOLERANCE {
        return Err(DpError::Numeric(format!("covariance is not PSD: min eigenvalue {min:.3e}")));
    }
    let roots = DVector::from_iterator(eig.eigenvalues.len(), eig.eigenvalues.iter().map(|l| l.max(0.0).sqrt()));
    Ok(&eig.eigenvectors * DMatrix::from_diagonal(&roots))
}

impl GaussianSampler {
    pub fn new(spec: &CovarianceSpec) -> Result<Self> {
        spec.validate()?;
        let dim = spec.dimension;
        let factor = match &spec.kind {
            CovarianceKind::Identity => Factor::Identity,
            CovarianceKind::Toeplitz { decay } => Factor::Toeplitz(*decay),
            CovarianceKind::Equicorrelated { variance, covariance } => Factor::Equicorrelated {
                within: (variance - covariance).max(0.0).sqrt(),
                along: (variance - covariance + covariance * dim as f64).max(0.0).sqrt(),
            },
            CovarianceKind::BlockDiagonal { blocks } => {
                Factor::Blocks(blocks.iter().map(GaussianSampler::new).collect::<Result<_>>()?)
            }
            CovarianceKind::RandomEffects { sigma_u2, group_sizes, t, per_user } => Factor::RandomEffects {
                sigma_u: sigma_u2.sqrt(),
                group_sizes: group_sizes.clone(),
                t: *t,
                per_user: Box::new(GaussianSampler::new(per_user)?),
            },
            CovarianceKind::Explicit { matrix } => {
                Factor::Dense(dense_factor(&CovarianceSpec::explicit_matrix(matrix))?)
            }
        };
        Ok(Self { dim, factor })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Writes one centred draw into `out`.
    pub fn sample_into<R: Rng + ?Sized>(&self, rng: &mut R, out: &mut [f64]) {
        let n = self.dim;
        match &self.factor {
            Factor::Identity => {
                for o in out.iter_mut() {
                    *o = StandardNormal.sample(rng);
                }
            }
            Factor::Toeplitz(q) => {
                let innov = (1.0 - q * q).sqrt();
                let mut prev: f64 = StandardNormal.sample(rng);
                out[0] = prev;
                for o in out.iter_mut().skip(1) {
                    let z: f64 = StandardNormal.sample(rng);
                    prev = q * prev + innov * z;
                    *o = prev;
                }
            }
            Factor::Equicorrelated { within, along } => {
                let mut sum = 0.0;
                for o in out.iter_mut() {
                    let z: f64 = StandardNormal.sample(rng);
                    *o = z;
                    sum += z;
                }
                let bar = sum / n as f64;
                for o in out.iter_mut() {
                    *o = within * (*o - bar) + along * bar;
                }
            }
            Factor::Dense(l) => {
                let z: Vec<f64> = (0..n).map(|_| StandardNormal.sample(rng)).collect();
                for (i, o) in out.iter_mut().enumerate() {
                    *o = (0..n).map(|j| l[(i, j)] * z[j]).sum();
                }
            }
            Factor::Blocks(blocks) => {
                let mut off = 0;
                for b in blocks {
                    b.sample_into(rng, &mut out[off..off + b.dim]);
                    off += b.dim;
                }
            }
            Factor::RandomEffects { sigma_u, group_sizes, t, per_user } => {
                let mut off = 0;
                for &g in group_sizes {
                    let u = if *sigma_u > 0.0 {
                        let z: f64 = StandardNormal.sample(rng);
                        sigma_u * z
                    } else {
                        0.0
                    };
                    for _ in 0..g {
                        let block = &mut out[off..off + t];
                        per_user.sample_into(rng, block);
                        for v in block.iter_mut() {
                            *v += u;
                        }
                        off += t;
                    }
                }
            }
        }
    }

    /// One draw of `mean + Σ^{1/2} z`.
    pub fn sample<R: Rng + ?Sized>(&self, mean: &[f64], rng: &mut R) -> Result<Vec<f64>> {
        if mean.len() != self.dim {
            return Err(DpError::ShapeMismatch(format!("mean has length {}, spec dimension {}", mean.len(), self.dim)));
        }
        let mut out = vec![0.0; self.dim];
        self.sample_into(rng, &mut out);
        for (o, m) in out.iter_mut().zip(mean) {
            *o += m;
        }
        Ok(out)
    }
}

pub fn sample_gaussian<R: Rng + ?Sized>(mean: &[f64], spec: &CovarianceSpec, rng: &mut R) -> Result<Vec<f64>> {
    GaussianSampler::new(spec)?.sample(mean, rng)
}

/// Draws `Y_gut = μ + U_g + ε_ut` and returns the user data together with
/// each user's group label.
pub fn sample_random_effects<R: Rng + ?Sized>(
    mu: f64,
    sigma_u2: f64,
    group_sizes: &[usize],
    t: usize,
    per_user_spec: &CovarianceSpec,
    rng: &mut R,
) -> Result<(UserDataMatrix, Vec<usize>)> {
    let spec = CovarianceSpec::random_effects(sigma_u2, group_sizes.to_vec(), t, per_user_spec.clone());
    let sampler = GaussianSampler::new(&spec)?;
    let n_users: usize = group_sizes.iter().sum();
    let mut values = vec![0.0; spec.dimension];
    sampler.sample_into(rng, &mut values);
    for v in &mut values {
        *v += mu;
    }
    let labels = group_sizes.iter().enumerate().flat_map(|(g, &s)| std::iter::repeat_n(g, s)).collect();
    Ok((UserDataMatrix::new(n_users, t, DMatrix::from_column_slice(n_users * t, 1, &values))?, labels))
}

/// `Y_u = X_u β + ε_u` with `ε_u ~ N(0, Σ_u)`. `noise_specs` holds one spec
/// per user or a single spec shared by all users.
pub fn sample_regression<R: Rng + ?Sized>(
    beta: &[f64],
    designs: &[DMatrix<f64>],
    noise_specs: &[CovarianceSpec],
    rng: &mut R,
) -> Result<RegressionDataset> {
    if designs.is_empty() {
        return Err(invalid_param("at least one user design is required"));
    }
    if noise_specs.len() != 1 && noise_specs.len() != designs.len() {
        return Err(DpError::ShapeMismatch(format!(
            "{} noise specs for {} users",
            noise_specs.len(),
            designs.len()
        )));
    }
    let t = designs[0].nrows();
    let p = beta.len();
    let b = DVector::from_column_slice(beta);
    let samplers: Vec<GaussianSampler> = noise_specs.iter().map(GaussianSampler::new).collect::<Result<_>>()?;
    let mut response = Vec::with_capacity(t * designs.len());
    let mut eps = vec![0.0; t];
    for (u, x) in designs.iter().enumerate() {
        if x.nrows() != t || x.ncols() != p {
            return Err(DpError::ShapeMismatch(format!("user {u} design is {:?}, expected ({t}, {p})", x.shape())));
        }
        let s = &samplers[if samplers.len() == 1 { 0 } else { u }];
        if s.dim() != t {
            return Err(DpError::ShapeMismatch(format!("noise spec for user {u} has dimension {}", s.dim())));
        }
        s.sample_into(rng, &mut eps);
        let mean = x * &b;
        response.extend(mean.iter().zip(&eps).map(|(m, e)| m + e));
    }
    let blocks = (0..designs.len())
        .map(|u| build_covariance(&noise_specs[if noise_specs.len() == 1 { 0 } else { u }]))
        .collect::<Result<Vec<_>>>()?;
    RegressionDataset::from_blocks(designs, response, Some(blocks))
}

/// Fixed design `Y_i = f(i/n) + ε_i` with `ε ~ N(0, Σ)`.
pub fn sample_fixed_design<R: Rng + ?Sized>(
    f: &dyn Fn(f64) -> f64,
    n: usize,
    noise_spec: &CovarianceSpec,
    rng: &mut R,
) -> Result<FixedDesign> {
    if noise_spec.dimension != n {
        return Err(DpError::ShapeMismatch(format!("noise dimension {} != n = {n}", noise_spec.dimension)));
    }
    let sampler = GaussianSampler::new(noise_spec)?;
    let mut eps = vec![0.0; n];
    sampler.sample_into(rng, &mut eps);
    let y = (0..n).map(|i| f(i as f64 / n as f64) + eps[i]).collect();
    FixedDesign::new(y)
}
