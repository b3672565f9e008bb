//! User-level estimation: per-user averaging, user-level means, random
//! effects and longitudinal regression.

use std::collections::{BTreeMap, HashMap};
use std::path::Path;

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{invalid_input, invalid_param, DpError, Result};
use crate::histogram::IntervalMode;
use crate::linalg::{inverse_spd, max_eigenvalue, min_eigenvalue, solve_spd, solve_spd_vec, CONDITION_LIMIT};
use crate::mean::{
    concentration_radius, winsorized_mean_1d_central, winsorized_mean_1d_local, winsorized_mean_hd_central,
    winsorized_mean_hd_local, ConcentrationSpec, MeanEstimate,
};
use crate::mechanisms::PrivacyBudget;

/// `n·T × d` observations in user-major order: user `u` owns rows
/// `[uT, (u+1)T)`.
#[derive(Debug, Clone, PartialEq)]
pub struct UserDataMatrix {
    n_users: usize,
    t: usize,
    data: DMatrix<f64>,
}

impl UserDataMatrix {
    pub fn new(n_users: usize, t: usize, data: DMatrix<f64>) -> Result<Self> {
        if n_users == 0 || t == 0 {
            return Err(invalid_param("n_users and T must be positive"));
        }
        if data.nrows() != n_users * t {
            return Err(DpError::ShapeMismatch(format!(
                "{} rows for {n_users} users with T = {t}",
                data.nrows()
            )));
        }
        if data.ncols() == 0 {
            return Err(invalid_input("user data needs at least one column"));
        }
        Ok(Self { n_users, t, data })
    }

    /// One-dimensional data from a flat user-major vector.
    pub fn from_values(n_users: usize, t: usize, values: &[f64]) -> Result<Self> {
        Self::new(n_users, t, DMatrix::from_column_slice(values.len(), 1, values))
    }

    pub fn n_users(&self) -> usize {
        self.n_users
    }

    pub fn t(&self) -> usize {
        self.t
    }

    pub fn d(&self) -> usize {
        self.data.ncols()
    }

    pub fn data(&self) -> &DMatrix<f64> {
        &self.data
    }
}

/// Row `u` is the mean of user `u`'s `T` rows.
pub fn user_averages(x: &UserDataMatrix) -> DMatrix<f64> {
    let (n, t, d) = (x.n_users, x.t, x.d());
    let mut out = DMatrix::zeros(n, d);
    for j in 0..d {
        let col = x.data.column(j);
        for u in 0..n {
            let s: f64 = col.rows(u * t, t).iter().sum();
            out[(u, j)] = s / t as f64;
        }
    }
    out
}

/// Which privacy model an estimator runs in.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "model", rename_all = "snake_case")]
pub enum PrivacyModel {
    Central,
    Local { bound_b: f64 },
}

/// Runs the central estimator on an `n × d` matrix: the one-dimensional path
/// when `d = 1` and no composition slack is budgeted, the composed path
/// otherwise.
pub fn central_dispatch<R: Rng + ?Sized>(
    m: &DMatrix<f64>,
    tau: f64,
    budget: &PrivacyBudget,
    rng: &mut R,
    mode: IntervalMode,
) -> Result<MeanEstimate> {
    if m.ncols() == 1 && budget.varrho() == 0.0 {
        let col: Vec<f64> = m.column(0).iter().copied().collect();
        winsorized_mean_1d_central(&col, tau, budget, rng, mode)
    } else {
        winsorized_mean_hd_central(m, tau, budget, rng, mode)
    }
}

/// Local counterpart of [`central_dispatch`].
pub fn local_dispatch<R: Rng + ?Sized>(
    m: &DMatrix<f64>,
    tau: f64,
    epsilon: f64,
    varrho: f64,
    bound_b: f64,
    rng: &mut R,
) -> Result<MeanEstimate> {
    if m.ncols() == 1 && varrho == 0.0 {
        let col: Vec<f64> = m.column(0).iter().copied().collect();
        winsorized_mean_1d_local(&col, tau, epsilon, bound_b, rng)
    } else {
        winsorized_mean_hd_local(m, tau, epsilon, varrho, bound_b, rng)
    }
}

/// User-level central mean: Winsorized mean of the user averages with
/// `τ = concentration_radius(spec, n, d, T)`.
pub fn user_level_mean_central<R: Rng + ?Sized>(
    x: &UserDataMatrix,
    spec: &ConcentrationSpec,
    budget: &PrivacyBudget,
    rng: &mut R,
) -> Result<MeanEstimate> {
    let avgs = user_averages(x);
    let tau = concentration_radius(spec, x.n_users, x.d(), x.t)?;
    central_dispatch(&avgs, tau, budget, rng, IntervalMode::Default)
}

/// User-level local mean.
pub fn user_level_mean_local<R: Rng + ?Sized>(
    x: &UserDataMatrix,
    spec: &ConcentrationSpec,
    epsilon: f64,
    varrho: f64,
    bound_b: f64,
    rng: &mut R,
) -> Result<MeanEstimate> {
    let avgs = user_averages(x);
    let tau = concentration_radius(spec, x.n_users, x.d(), x.t)?;
    local_dispatch(&avgs, tau, epsilon, varrho, bound_b, rng)
}

/// Stacked regression data `Y_u = X_u β + ε_u` for `n` users with `T`
/// observations each.
#[derive(Debug, Clone, PartialEq)]
pub struct RegressionDataset {
    n_users: usize,
    t: usize,
    design: DMatrix<f64>,
    response: DVector<f64>,
    noise_blocks: Option<Vec<DMatrix<f64>>>,
    user_ids: Vec<String>,
}

impl RegressionDataset {
    pub fn new(
        n_users: usize,
        t: usize,
        design: DMatrix<f64>,
        response: DVector<f64>,
        noise_blocks: Option<Vec<DMatrix<f64>>>,
    ) -> Result<Self> {
        if n_users == 0 || t == 0 || design.ncols() == 0 {
            return Err(invalid_param("regression data needs users, observations and covariates"));
        }
        if design.nrows() != n_users * t || response.len() != n_users * t {
            return Err(DpError::ShapeMismatch(format!(
                "design {:?} and response {} for {n_users} users with T = {t}",
                design.shape(),
                response.len()
            )));
        }
        if let Some(blocks) = &noise_blocks {
            if blocks.len() != n_users || blocks.iter().any(|b| b.shape() != (t, t)) {
                return Err(DpError::ShapeMismatch(format!("need {n_users} noise blocks of size {t}x{t}")));
            }
        }
        let user_ids = (0..n_users).map(|u| u.to_string()).collect();
        Ok(Self { n_users, t, design, response, noise_blocks, user_ids })
    }

    pub fn from_blocks(designs: &[DMatrix<f64>], response: Vec<f64>, noise_blocks: Option<Vec<DMatrix<f64>>>) -> Result<Self> {
        let t = designs.first().map(|d| d.nrows()).unwrap_or(0);
        let p = designs.first().map(|d| d.ncols()).unwrap_or(0);
        if designs.iter().any(|d| d.shape() != (t, p)) {
            return Err(DpError::ShapeMismatch("all user designs must share one shape".into()));
        }
        let design = DMatrix::from_fn(designs.len() * t, p, |r, c| designs[r / t][(r % t, c)]);
        Self::new(designs.len(), t, design, DVector::from_vec(response), noise_blocks)
    }

    pub fn n_users(&self) -> usize {
        self.n_users
    }

    pub fn t(&self) -> usize {
        self.t
    }

    pub fn p(&self) -> usize {
        self.design.ncols()
    }

    pub fn design(&self) -> &DMatrix<f64> {
        &self.design
    }

    pub fn response(&self) -> &DVector<f64> {
        &self.response
    }

    pub fn noise_blocks(&self) -> Option<&[DMatrix<f64>]> {
        self.noise_blocks.as_deref()
    }

    pub fn user_ids(&self) -> &[String] {
        &self.user_ids
    }

    pub fn design_block(&self, u: usize) -> DMatrix<f64> {
        self.design.rows(u * self.t, self.t).into_owned()
    }

    pub fn response_block(&self, u: usize) -> DVector<f64> {
        self.response.rows(u * self.t, self.t).into_owned()
    }

    /// Same designs with a different response vector.
    pub fn with_response(&self, response: DVector<f64>) -> Result<Self> {
        if response.len() != self.response.len() {
            return Err(DpError::ShapeMismatch("response length changed".into()));
        }
        Ok(Self { response, ..self.clone() })
    }

    fn check_user(&self, u: usize) -> Result<()> {
        if u >= self.n_users {
            return Err(invalid_input(format!("user {u} out of range (n = {})", self.n_users)));
        }
        Ok(())
    }

    fn noise_block(&self, u: usize) -> Result<&DMatrix<f64>> {
        self.noise_blocks
            .as_ref()
            .map(|b| &b[u])
            .ok_or_else(|| invalid_input("generalized least squares needs noise blocks"))
    }
}

/// `β̂_u = (X_uᵀX_u)⁻¹ X_uᵀ Y_u`.
pub fn per_user_ols(ds: &RegressionDataset, u: usize) -> Result<DVector<f64>> {
    ds.check_user(u)?;
    let x = ds.design_block(u);
    let y = ds.response_block(u);
    solve_spd_vec(&(x.transpose() * &x), &(x.transpose() * y))
}

fn whitened(ds: &RegressionDataset, u: usize) -> Result<(DMatrix<f64>, DVector<f64>)> {
    let sigma = ds.noise_block(u)?;
    let chol = sigma.clone().cholesky().ok_or(DpError::SingularDesign { condition: f64::INFINITY, limit: CONDITION_LIMIT })?;
    let l = chol.l();
    let x = l
        .solve_lower_triangular(&ds.design_block(u))
        .ok_or_else(|| DpError::Numeric("triangular solve failed".into()))?;
    let y = l
        .solve_lower_triangular(&ds.response_block(u))
        .ok_or_else(|| DpError::Numeric("triangular solve failed".into()))?;
    Ok((x, y))
}

/// `β̂_{wu} = (X_uᵀΣ_u⁻¹X_u)⁻¹ X_uᵀΣ_u⁻¹Y_u`, computed by whitening with the
/// Cholesky factor of `Σ_u`.
pub fn per_user_gls(ds: &RegressionDataset, u: usize) -> Result<DVector<f64>> {
    ds.check_user(u)?;
    let (x, y) = whitened(ds, u)?;
    solve_spd_vec(&(x.transpose() * &x), &(x.transpose() * y))
}

/// `β̂_OLS = (Σ X_uᵀX_u)⁻¹ Σ X_uᵀY_u`.
pub fn pooled_ols(ds: &RegressionDataset) -> Result<DVector<f64>> {
    let x = ds.design();
    solve_spd_vec(&(x.transpose() * x), &(x.transpose() * ds.response()))
}

/// `β̂_wOLS = (Σ X_uᵀΣ_u⁻¹X_u)⁻¹ Σ X_uᵀΣ_u⁻¹Y_u`.
pub fn pooled_wols(ds: &RegressionDataset) -> Result<DVector<f64>> {
    let p = ds.p();
    let mut a = DMatrix::zeros(p, p);
    let mut b = DVector::zeros(p);
    for u in 0..ds.n_users {
        let (x, y) = whitened(ds, u)?;
        a += x.transpose() * &x;
        b += x.transpose() * y;
    }
    solve_spd_vec(&a, &b)
}

/// Average of the per-user OLS estimates.
pub fn averaged_ols(ds: &RegressionDataset) -> Result<DVector<f64>> {
    let mut acc = DVector::zeros(ds.p());
    for u in 0..ds.n_users {
        acc += per_user_ols(ds, u)?;
    }
    Ok(acc / ds.n_users as f64)
}

/// Average of the per-user GLS estimates.
pub fn averaged_gls(ds: &RegressionDataset) -> Result<DVector<f64>> {
    let mut acc = DVector::zeros(ds.p());
    for u in 0..ds.n_users {
        acc += per_user_gls(ds, u)?;
    }
    Ok(acc / ds.n_users as f64)
}

/// Closed-form covariances of the four classical estimators.
#[derive(Debug, Clone, PartialEq)]
pub struct GlsCovariances {
    /// Averaged per-user OLS, `β̂`.
    pub averaged_ols: DMatrix<f64>,
    /// Averaged per-user GLS, `β̂_w`.
    pub averaged_gls: DMatrix<f64>,
    /// Pooled OLS, `β̂_OLS`.
    pub pooled_ols: DMatrix<f64>,
    /// Pooled weighted OLS, `β̂_wOLS`.
    pub pooled_wols: DMatrix<f64>,
}

pub fn gls_covariances(ds: &RegressionDataset) -> Result<GlsCovariances> {
    let blocks = ds
        .noise_blocks()
        .ok_or_else(|| invalid_input("covariances need noise blocks"))?;
    let p = ds.p();
    let n = ds.n_users as f64;
    let mut avg_ols = DMatrix::zeros(p, p);
    let mut avg_gls = DMatrix::zeros(p, p);
    let mut sum_xx = DMatrix::zeros(p, p);
    let mut sum_xsx = DMatrix::zeros(p, p);
    let mut sum_xsix = DMatrix::zeros(p, p);
    for (u, sigma) in blocks.iter().enumerate() {
        let x = ds.design_block(u);
        let xx = x.transpose() * &x;
        let xsx = x.transpose() * sigma * &x;
        let sigma_inv_x = solve_spd(sigma, &x)?;
        let xsix = x.transpose() * sigma_inv_x;
        let a_inv = inverse_spd(&xx)?;
        avg_ols += &a_inv * &xsx * &a_inv;
        avg_gls += inverse_spd(&xsix)?;
        sum_xx += xx;
        sum_xsx += xsx;
        sum_xsix += xsix;
    }
    let pooled_inv = inverse_spd(&sum_xx)?;
    Ok(GlsCovariances {
        averaged_ols: avg_ols / (n * n),
        averaged_gls: avg_gls / (n * n),
        pooled_ols: &pooled_inv * sum_xsx * &pooled_inv,
        pooled_wols: inverse_spd(&sum_xsix)?,
    })
}

/// Known constants of the longitudinal model: eigenvalue bounds
/// `θ ≤ eig(X_uᵀX_u/T) ≤ ϑ`, noise bound `Σ_u ⪯ σ²I` and failure
/// probability `γ`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RegressionBounds {
    pub theta: f64,
    pub vartheta: f64,
    pub sigma2: f64,
    pub gamma: f64,
}

impl RegressionBounds {
    /// `τ = √(2 (ϑ/θ²) σ² ln(2pn/γ) / T)`.
    pub fn radius(&self, n: usize, p: usize, t: usize) -> Result<f64> {
        if !(self.theta > 0.0 && self.vartheta >= self.theta && self.sigma2 > 0.0) {
            return Err(invalid_param(format!("invalid regression bounds {self:?}")));
        }
        let rho = self.vartheta / (self.theta * self.theta) * self.sigma2;
        concentration_radius(&ConcentrationSpec::new(rho, self.gamma), n, p, t)
    }
}

/// Stacks `β̂_u` into an `n × p` matrix after checking the eigenvalue bounds.
pub fn per_user_ols_matrix(ds: &RegressionDataset, bounds: &RegressionBounds) -> Result<DMatrix<f64>> {
    let (n, p, t) = (ds.n_users, ds.p(), ds.t);
    let mut out = DMatrix::zeros(n, p);
    for u in 0..n {
        let x = ds.design_block(u);
        let m = x.transpose() * &x / t as f64;
        let (lo, hi) = (min_eigenvalue(&m), max_eigenvalue(&m));
        let slack = 1e-12 * bounds.vartheta.abs().max(1.0);
        if lo < bounds.theta - slack || hi > bounds.vartheta + slack {
            return Err(DpError::Precondition(format!(
                "user {} ({}) has eigenvalues of X_u'X_u/T in [{lo:.6}, {hi:.6}], outside [{}, {}]",
                u, ds.user_ids[u], bounds.theta, bounds.vartheta
            )));
        }
        let beta = per_user_ols(ds, u)?;
        out.row_mut(u).copy_from(&beta.transpose());
    }
    Ok(out)
}

/// Private longitudinal regression: Winsorized mean of the per-user OLS
/// estimates.
pub fn private_longitudinal_regression<R: Rng + ?Sized>(
    ds: &RegressionDataset,
    bounds: &RegressionBounds,
    budget: &PrivacyBudget,
    rng: &mut R,
    model: PrivacyModel,
) -> Result<MeanEstimate> {
    let betas = per_user_ols_matrix(ds, bounds)?;
    let tau = bounds.radius(ds.n_users, ds.p(), ds.t)?;
    match model {
        PrivacyModel::Central => central_dispatch(&betas, tau, budget, rng, IntervalMode::Default),
        PrivacyModel::Local { bound_b } => local_dispatch(&betas, tau, budget.epsilon(), budget.varrho(), bound_b, rng),
    }
}

/// `ρ = max_g (σ_U² n_g T + σ²)`.
pub fn random_effects_rho(sigma_u2: f64, group_sizes: &[usize], t: usize, sigma2: f64) -> f64 {
    group_sizes
        .iter()
        .map(|&g| sigma_u2 * g as f64 * t as f64 + sigma2)
        .fold(f64::NEG_INFINITY, f64::max)
}

/// Location estimate under the random-effects model. Group labels are
/// validated but never read by the estimator itself.
pub fn random_effects_location<R: Rng + ?Sized>(
    y: &UserDataMatrix,
    groups: &[usize],
    spec: &ConcentrationSpec,
    budget: &PrivacyBudget,
    rng: &mut R,
    model: PrivacyModel,
) -> Result<MeanEstimate> {
    if groups.len() != y.n_users {
        return Err(DpError::ShapeMismatch(format!("{} group labels for {} users", groups.len(), y.n_users)));
    }
    if y.d() != 1 {
        return Err(invalid_input("random-effects location expects one-dimensional data"));
    }
    match model {
        PrivacyModel::Central => user_level_mean_central(y, spec, budget, rng),
        PrivacyModel::Local { bound_b } => user_level_mean_local(y, spec, budget.epsilon(), budget.varrho(), bound_b, rng),
    }
}

fn csv_err(e: csv::Error) -> DpError {
    DpError::Io(e.to_string())
}

/// Reads `(user_id, t, x_1..x_p, y)` rows. Users are ordered by first
/// appearance, observations within a user by `t`.
pub fn load_regression_csv(path: impl AsRef<Path>) -> Result<RegressionDataset> {
    let mut rdr = csv::Reader::from_path(path.as_ref()).map_err(csv_err)?;
    let headers = rdr.headers().map_err(csv_err)?.clone();
    if headers.len() < 4 {
        return Err(invalid_input("regression CSV needs columns user_id, t, x_1..x_p, y"));
    }
    let p = headers.len() - 3;
    let mut order: Vec<String> = Vec::new();
    let mut rows: HashMap<String, Vec<(f64, Vec<f64>, f64)>> = HashMap::new();
    for (line, rec) in rdr.records().enumerate() {
        let rec = rec.map_err(csv_err)?;
        let num = |i: usize| -> Result<f64> {
            rec[i].trim().parse::<f64>().map_err(|_| {
                invalid_input(format!("row {}: column '{}' is not a number: {:?}", line + 2, &headers[i], &rec[i]))
            })
        };
        let id = rec[0].trim().to_string();
        let t = num(1)?;
        let x = (2..2 + p).map(num).collect::<Result<Vec<_>>>()?;
        let y = num(2 + p)?;
        if !rows.contains_key(&id) {
            order.push(id.clone());
        }
        rows.entry(id).or_default().push((t, x, y));
    }
    if order.is_empty() {
        return Err(invalid_input("regression CSV has no rows"));
    }
    let t = rows[&order[0]].len();
    let mut designs = Vec::with_capacity(order.len());
    let mut response = Vec::with_capacity(order.len() * t);
    for id in &order {
        let mut r = rows.remove(id).expect("id recorded");
        if r.len() != t {
            return Err(invalid_input(format!("user {id} has {} observations, expected {t}", r.len())));
        }
        r.sort_by(|a, b| a.0.total_cmp(&b.0));
        designs.push(DMatrix::from_fn(t, p, |i, j| r[i].1[j]));
        response.extend(r.iter().map(|row| row.2));
    }
    let mut ds = RegressionDataset::from_blocks(&designs, response, None)?;
    ds.user_ids = order;
    Ok(ds)
}

/// Reads `(user_id, group_id)` rows and returns dense group indices aligned
/// with `user_ids`.
pub fn load_group_labels(path: impl AsRef<Path>, user_ids: &[String]) -> Result<Vec<usize>> {
    let mut rdr = csv::Reader::from_path(path.as_ref()).map_err(csv_err)?;
    let mut by_user: HashMap<String, String> = HashMap::new();
    for rec in rdr.records() {
        let rec = rec.map_err(csv_err)?;
        if rec.len() < 2 {
            return Err(invalid_input("group CSV needs columns user_id, group_id"));
        }
        by_user.insert(rec[0].trim().to_string(), rec[1].trim().to_string());
    }
    let mut index: BTreeMap<String, usize> = BTreeMap::new();
    user_ids
        .iter()
        .map(|u| {
            let g = by_user
                .get(u)
                .ok_or_else(|| invalid_input(format!("user {u} has no group label")))?;
            let next = index.len();
            Ok(*index.entry(g.clone()).or_insert(next))
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mechanisms::RngStream;

    #[test]
    fn averages_examples() {
        let m = DMatrix::from_row_slice(2, 2, &[1.0, 3.0, 3.0, 5.0]);
        let x = UserDataMatrix::new(1, 2, m).unwrap();
        assert_eq!(user_averages(&x), DMatrix::from_row_slice(1, 2, &[2.0, 4.0]));
        let m = DMatrix::from_fn(5, 3, |i, j| (i * 3 + j) as f64 * 0.7);
        let x = UserDataMatrix::new(5, 1, m.clone()).unwrap();
        assert_eq!(user_averages(&x), m);
        assert!(UserDataMatrix::new(2, 3, DMatrix::zeros(5, 1)).is_err());
    }

    #[test]
    fn grand_mean_identity() {
        let mut rng = RngStream::new(1, 0).rng();
        let (n, t) = (64usize, 8usize);
        let vals: Vec<f64> = (0..n * t).map(|_| rng.random_range(-512i32..512) as f64 / 8.0).collect();
        let x = UserDataMatrix::from_values(n, t, &vals).unwrap();
        let avgs = user_averages(&x);
        let a = avgs.iter().sum::<f64>() / n as f64;
        let g = vals.iter().sum::<f64>() / (n * t) as f64;
        assert_eq!(a, g);
    }

    fn counterexample() -> RegressionDataset {
        let x1 = DMatrix::from_row_slice(3, 2, &[1.0, 0.0, 0.0, 1.0, 0.0, 0.0]);
        let x2 = &x1 * 2f64.sqrt();
        RegressionDataset::from_blocks(
            &[x1, x2],
            vec![0.0; 6],
            Some(vec![DMatrix::identity(3, 3), DMatrix::identity(3, 3) * 4.0]),
        )
        .unwrap()
    }

    #[test]
    fn counterexample_covariances() {
        let c = gls_covariances(&counterexample()).unwrap();
        assert!((c.pooled_ols.clone() - DMatrix::<f64>::identity(2, 2)).abs().max() < 1e-10);
        assert!((c.averaged_ols.clone() - DMatrix::<f64>::identity(2, 2) * 0.75).abs().max() < 1e-10);
        // Per-user GLS equals OLS here since Σ_u is a multiple of I.
        assert!((c.averaged_gls - c.averaged_ols).abs().max() < 1e-12);
    }

    #[test]
    fn ols_recovers_beta() {
        let x = DMatrix::from_row_slice(4, 2, &[1.0, 0.0, 0.0, 1.0, 1.0, 1.0, 2.0, -1.0]);
        let beta = DVector::from_vec(vec![0.3, -1.7]);
        let y = &x * &beta;
        let ds = RegressionDataset::from_blocks(&[x], y.iter().copied().collect(), Some(vec![DMatrix::identity(4, 4) * 2.5]))
            .unwrap();
        assert!((per_user_ols(&ds, 0).unwrap() - &beta).abs().max() < 1e-10);
        assert!((per_user_gls(&ds, 0).unwrap() - &beta).abs().max() < 1e-10);
        assert!(per_user_ols(&ds, 1).is_err());
    }

    #[test]
    fn singular_design_rejected() {
        let x = DMatrix::from_row_slice(3, 2, &[1.0, 2.0, 2.0, 4.0, 3.0, 6.0]);
        let ds = RegressionDataset::from_blocks(&[x], vec![1.0, 2.0, 3.0], None).unwrap();
        assert!(matches!(per_user_ols(&ds, 0), Err(DpError::SingularDesign { .. })));
        assert!(per_user_gls(&ds, 0).is_err());
    }

    #[test]
    fn eigenvalue_precondition() {
        let x = DMatrix::from_row_slice(2, 1, &[1.0, 1.0]);
        let y = DMatrix::from_row_slice(2, 1, &[3.0, 3.0]);
        let ds = RegressionDataset::from_blocks(&[x, y], vec![1.0, 1.0, 3.0, 3.0], None).unwrap();
        let bounds = RegressionBounds { theta: 0.5, vartheta: 2.0, sigma2: 1.0, gamma: 0.1 };
        let err = per_user_ols_matrix(&ds, &bounds).unwrap_err();
        match err {
            DpError::Precondition(msg) => assert!(msg.contains("user 1"), "{msg}"),
            e => panic!("unexpected {e:?}"),
        }
    }

    #[test]
    fn random_effects_rho_example() {
        assert!((random_effects_rho(0.01, &[3, 10, 4], 10, 1.0) - 2.0).abs() < 1e-12);
    }
}
