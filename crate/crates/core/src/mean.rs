//! Noisy Winsorized mean estimators in the central and local models.

use nalgebra::DMatrix;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{invalid_input, invalid_param, DpError, Result};
use crate::histogram::{projection_interval_central, projection_interval_local, IntervalMode, ProjectionInterval};
use crate::mechanisms::{advanced_total, compose_advanced, draw_laplace, PrivacyBudget};

/// Output of a Winsorized mean estimator.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MeanEstimate {
    /// Released estimate, `pre_noise + noise`.
    pub value: Vec<f64>,
    /// Per-coordinate clipped mean before privacy noise.
    pub pre_noise: Vec<f64>,
    /// Per-coordinate privacy noise (averaged per-item noise in the local model).
    pub noise: Vec<f64>,
    pub interval_per_dim: Vec<ProjectionInterval>,
    /// Number of `(i, j)` entries moved by the projection.
    pub clipped_count: usize,
    pub budget_spent: PrivacyBudget,
}

impl MeanEstimate {
    pub fn dim(&self) -> usize {
        self.value.len()
    }

    /// Number of coordinates whose histogram released nothing.
    pub fn histogram_failures(&self) -> usize {
        self.interval_per_dim.iter().filter(|i| i.histogram_failed).count()
    }

    pub fn any_histogram_failed(&self) -> bool {
        self.histogram_failures() > 0
    }
}

/// Concentration parameters from which the radius `τ` is derived.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConcentrationSpec {
    pub rho: f64,
    pub gamma: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub marginal_rhos: Option<Vec<f64>>,
}

impl ConcentrationSpec {
    pub fn new(rho: f64, gamma: f64) -> Self {
        Self { rho, gamma, marginal_rhos: None }
    }

    pub fn with_marginals(rho: f64, gamma: f64, marginal_rhos: Vec<f64>) -> Self {
        Self { rho, gamma, marginal_rhos: Some(marginal_rhos) }
    }

    /// Constant entering the radius: the largest marginal constant when
    /// given, `rho` otherwise.
    pub fn effective_rho(&self) -> Result<f64> {
        match &self.marginal_rhos {
            Some(m) if !m.is_empty() => {
                let r = m.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
                if !(r > 0.0 && r.is_finite()) {
                    return Err(invalid_param("marginal constants must be positive"));
                }
                Ok(r)
            }
            Some(_) => Err(invalid_param("marginal_rhos must not be empty")),
            None => Ok(self.rho),
        }
    }
}

/// `τ = √(2ρ ln(2dn/γ)/T)`.
pub fn concentration_radius(spec: &ConcentrationSpec, n: usize, d: usize, t: usize) -> Result<f64> {
    if n == 0 || d == 0 || t == 0 {
        return Err(invalid_param("n, d and T must be positive"));
    }
    if !(spec.gamma > 0.0 && spec.gamma < 1.0) {
        return Err(invalid_param(format!("gamma must lie in (0, 1), got {}", spec.gamma)));
    }
    let rho = spec.effective_rho()?;
    if !(rho > 0.0 && rho.is_finite()) {
        return Err(invalid_param(format!("rho must be positive, got {rho}")));
    }
    Ok((2.0 * rho * (2.0 * d as f64 * n as f64 / spec.gamma).ln() / t as f64).sqrt())
}

/// Projection onto `[lo, hi]`.
pub fn clip(x: f64, lo: f64, hi: f64) -> f64 {
    x.clamp(lo, hi)
}

/// Mean of the projected values and the number of values moved.
pub fn clipped_mean(data: &[f64], interval: &ProjectionInterval) -> (f64, usize) {
    let (lo, hi) = (interval.lo(), interval.hi());
    let mut moved = 0;
    let mut sum = 0.0;
    for &x in data {
        let c = clip(x, lo, hi);
        if c != x {
            moved += 1;
        }
        sum += c;
    }
    (sum / data.len() as f64, moved)
}

struct Coordinate {
    value: f64,
    pre_noise: f64,
    noise: f64,
    clipped: usize,
}

/// Clipped mean over a given interval plus `Lap(2R/(εn))`.
pub fn winsorize_with_interval<R: Rng + ?Sized>(
    data: &[f64],
    interval: &ProjectionInterval,
    noise_epsilon: f64,
    rng: &mut R,
) -> Result<(f64, f64, usize)> {
    if data.is_empty() {
        return Err(invalid_input("no observations"));
    }
    if !(noise_epsilon > 0.0) {
        return Err(invalid_param(format!("epsilon must be positive, got {noise_epsilon}")));
    }
    let (pre, clipped) = clipped_mean(data, interval);
    let noise = draw_laplace(0.0, 2.0 * interval.radius / (noise_epsilon * data.len() as f64), rng);
    Ok((pre + noise, pre, clipped))
}

fn central_coordinate<R: Rng + ?Sized>(
    data: &[f64],
    tau: f64,
    epsilon: f64,
    delta: f64,
    rng: &mut R,
    mode: IntervalMode,
) -> Result<(Coordinate, ProjectionInterval)> {
    if data.is_empty() {
        return Err(invalid_input("no observations"));
    }
    let half = epsilon / 2.0;
    let interval = projection_interval_central(data, tau, half, delta, rng, mode)?;
    let (value, pre_noise, clipped) = winsorize_with_interval(data, &interval, half, rng)?;
    Ok((Coordinate { value, pre_noise, noise: value - pre_noise, clipped }, interval))
}

fn assemble(coords: Vec<(Coordinate, ProjectionInterval)>, budget_spent: PrivacyBudget) -> MeanEstimate {
    let mut est = MeanEstimate {
        value: Vec::with_capacity(coords.len()),
        pre_noise: Vec::with_capacity(coords.len()),
        noise: Vec::with_capacity(coords.len()),
        interval_per_dim: Vec::with_capacity(coords.len()),
        clipped_count: 0,
        budget_spent,
    };
    for (c, iv) in coords {
        est.value.push(c.value);
        est.pre_noise.push(c.pre_noise);
        est.noise.push(c.noise);
        est.interval_per_dim.push(iv);
        est.clipped_count += c.clipped;
    }
    est
}

/// One-dimensional central estimator: projection interval at `ε/2`, then the
/// clipped mean released with `Lap(2R/((ε/2)n))`.
pub fn winsorized_mean_1d_central<R: Rng + ?Sized>(
    data: &[f64],
    tau: f64,
    budget: &PrivacyBudget,
    rng: &mut R,
    mode: IntervalMode,
) -> Result<MeanEstimate> {
    let coord = central_coordinate(data, tau, budget.epsilon(), budget.delta(), rng, mode)?;
    let spent = PrivacyBudget::new(budget.epsilon(), budget.delta(), 0.0)?;
    Ok(assemble(vec![coord], spent))
}

/// Coordinate-wise central estimator under advanced composition. The result
/// is `(ε, δ + ϱ)`-DP.
pub fn winsorized_mean_hd_central<R: Rng + ?Sized>(
    data: &DMatrix<f64>,
    tau: f64,
    budget: &PrivacyBudget,
    rng: &mut R,
    mode: IntervalMode,
) -> Result<MeanEstimate> {
    budget.require_central_range("the composed central estimator")?;
    let d = data.ncols();
    if d == 0 || data.nrows() == 0 {
        return Err(invalid_input("data matrix must be non-empty"));
    }
    let per = compose_advanced(d, budget)?;
    let coords = (0..d)
        .map(|j| {
            let col: Vec<f64> = data.column(j).iter().copied().collect();
            central_coordinate(&col, tau, per.epsilon(), per.delta(), rng, mode)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(assemble(coords, advanced_total(d, &per)?))
}

fn local_coordinate<R: Rng + ?Sized>(
    data: &[f64],
    tau: f64,
    epsilon: f64,
    bound_b: f64,
    rng: &mut R,
) -> Result<(Coordinate, ProjectionInterval)> {
    if data.is_empty() {
        return Err(invalid_input("no observations"));
    }
    if !(epsilon > 0.0) {
        return Err(invalid_param(format!("epsilon must be positive, got {epsilon}")));
    }
    let half = epsilon / 2.0;
    let interval = projection_interval_local(data, tau, half, bound_b, rng)?;
    let scale = 2.0 * interval.radius / half;
    let (lo, hi) = (interval.lo(), interval.hi());
    let mut clipped = 0;
    let mut clip_sum = 0.0;
    let mut noise_sum = 0.0;
    for &x in data {
        let c = clip(x, lo, hi);
        if c != x {
            clipped += 1;
        }
        clip_sum += c;
        noise_sum += draw_laplace(0.0, scale, rng);
    }
    let n = data.len() as f64;
    let (pre_noise, noise) = (clip_sum / n, noise_sum / n);
    Ok((Coordinate { value: pre_noise + noise, pre_noise, noise, clipped }, interval))
}

/// One-dimensional local estimator: every item releases its clipped value
/// plus `Lap(12τ/ε)`; the estimate averages the releases.
pub fn winsorized_mean_1d_local<R: Rng + ?Sized>(
    data: &[f64],
    tau: f64,
    epsilon: f64,
    bound_b: f64,
    rng: &mut R,
) -> Result<MeanEstimate> {
    let coord = local_coordinate(data, tau, epsilon, bound_b, rng)?;
    Ok(assemble(vec![coord], PrivacyBudget::pure(epsilon)?))
}

/// Coordinate-wise local estimator at `ε′ = ε/√(8d ln(1/ϱ))`; `(ε, ϱ)`-LDP.
pub fn winsorized_mean_hd_local<R: Rng + ?Sized>(
    data: &DMatrix<f64>,
    tau: f64,
    epsilon: f64,
    varrho: f64,
    bound_b: f64,
    rng: &mut R,
) -> Result<MeanEstimate> {
    let inside = |v: f64| v > 0.0 && v < 1.0;
    if !inside(epsilon) || !inside(varrho) {
        return Err(invalid_param(format!(
            "the composed local estimator requires epsilon, varrho in (0, 1); got ({epsilon}, {varrho})"
        )));
    }
    let d = data.ncols();
    if d == 0 || data.nrows() == 0 {
        return Err(invalid_input("data matrix must be non-empty"));
    }
    let per = compose_advanced(d, &PrivacyBudget::new(epsilon, 0.0, varrho)?)?;
    let coords = (0..d)
        .map(|j| {
            let col: Vec<f64> = data.column(j).iter().copied().collect();
            local_coordinate(&col, tau, per.epsilon(), bound_b, rng)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(assemble(coords, advanced_total(d, &per)?))
}

/// Sample-split estimator: midpoints from `z`, clipping and noise on `x`.
/// Each coordinate runs at the composed `(ε′, δ′)`; the result is
/// `(ε, δ + ϱ)`-DP.
pub fn winsorized_mean_split<R: Rng + ?Sized>(
    data_z: &DMatrix<f64>,
    data_x: &DMatrix<f64>,
    tau: f64,
    budget: &PrivacyBudget,
    rng: &mut R,
) -> Result<MeanEstimate> {
    if data_z.shape() != data_x.shape() {
        return Err(DpError::ShapeMismatch(format!(
            "Z is {:?} but X is {:?}",
            data_z.shape(),
            data_x.shape()
        )));
    }
    budget.require_central_range("the split estimator")?;
    let d = data_x.ncols();
    if d == 0 || data_x.nrows() == 0 {
        return Err(invalid_input("data matrices must be non-empty"));
    }
    let per = compose_advanced(d, budget)?;
    let half = per.epsilon() / 2.0;
    let intervals = (0..d)
        .map(|j| {
            let col: Vec<f64> = data_z.column(j).iter().copied().collect();
            projection_interval_central(&col, tau, half, per.delta(), rng, IntervalMode::Default)
        })
        .collect::<Result<Vec<_>>>()?;
    let coords = intervals
        .into_iter()
        .enumerate()
        .map(|(j, iv)| {
            let col: Vec<f64> = data_x.column(j).iter().copied().collect();
            let (value, pre_noise, clipped) = winsorize_with_interval(&col, &iv, half, rng)?;
            Ok((Coordinate { value, pre_noise, noise: value - pre_noise, clipped }, iv))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(assemble(coords, advanced_total(d, &per)?))
}
