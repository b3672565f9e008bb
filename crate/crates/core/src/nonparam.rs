//! Priestley–Chao regression on the fixed design `x_i = i/n` and its private
//! pointwise release.

use std::path::Path;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{invalid_param, DpError, Result};
use crate::histogram::IntervalMode;
use crate::mean::MeanEstimate;
use crate::mechanisms::PrivacyBudget;
use crate::user_level::{central_dispatch, local_dispatch, PrivacyModel};

/// Kernel together with the constants its error analysis needs.
#[derive(Debug, Clone, Copy)]
pub struct KernelSpec {
    pub name: &'static str,
    pub evaluate: fn(f64) -> f64,
    /// `‖K‖∞`.
    pub sup_norm: f64,
    /// `L_K`.
    pub lipschitz: f64,
    /// `μ₁(K) = ∫|s|K(s) ds`.
    pub first_abs_moment: f64,
    pub is_subgaussian_density: bool,
}

fn gaussian_density(u: f64) -> f64 {
    (-0.5 * u * u).exp() / (2.0 * std::f64::consts::PI).sqrt()
}

impl KernelSpec {
    /// Standard normal density.
    pub fn gaussian() -> Self {
        let two_pi = 2.0 * std::f64::consts::PI;
        Self {
            name: "gaussian",
            evaluate: gaussian_density,
            sup_norm: 1.0 / two_pi.sqrt(),
            lipschitz: 1.0 / (two_pi * std::f64::consts::E).sqrt(),
            first_abs_moment: (2.0 / std::f64::consts::PI).sqrt(),
            is_subgaussian_density: true,
        }
    }

    pub fn eval(&self, u: f64) -> f64 {
        (self.evaluate)(u)
    }
}

/// Responses observed at `x_i = i/n`, `0 ≤ i < n`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FixedDesign {
    responses: Vec<f64>,
}

impl FixedDesign {
    pub fn new(responses: Vec<f64>) -> Result<Self> {
        if responses.is_empty() {
            return Err(invalid_param("fixed design needs at least one response"));
        }
        Ok(Self { responses })
    }

    pub fn n(&self) -> usize {
        self.responses.len()
    }

    pub fn point(&self, i: usize) -> f64 {
        i as f64 / self.n() as f64
    }

    pub fn responses(&self) -> &[f64] {
        &self.responses
    }
}

fn check_args(b: f64, x: f64) -> Result<()> {
    if !(b > 0.0 && b.is_finite()) {
        return Err(invalid_param(format!("bandwidth must be positive, got {b}")));
    }
    if !(0.0..=1.0).contains(&x) {
        return Err(invalid_param(format!("evaluation point must lie in [0, 1], got {x}")));
    }
    Ok(())
}

/// `Y_i (1/b) K((x − x_i)/b)` for every design point.
pub fn contribution_vector(design: &FixedDesign, kernel: &KernelSpec, b: f64, x: f64) -> Result<Vec<f64>> {
    check_args(b, x)?;
    Ok(design
        .responses
        .iter()
        .enumerate()
        .map(|(i, y)| y * kernel.eval((x - design.point(i)) / b) / b)
        .collect())
}

/// `Σ_i (1/(nb)) K((x − x_i)/b) Y_i`, computed as the mean of the
/// contribution vector.
pub fn priestley_chao(design: &FixedDesign, kernel: &KernelSpec, b: f64, x: f64) -> Result<f64> {
    let c = contribution_vector(design, kernel, b, x)?;
    Ok(c.iter().sum::<f64>() / c.len() as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BandwidthRule {
    Central,
    Local,
}

/// Central: `max((σ²/n)^{1/3}, (σ/(nε))^{1/2})`;
/// local: `max((σ²/n)^{1/3}, (σ/(√n ε))^{1/2})`.
pub fn select_bandwidth(n: usize, sigma_max: f64, epsilon: f64, rule: BandwidthRule) -> f64 {
    let n = n as f64;
    let stat = (sigma_max * sigma_max / n).cbrt();
    let privacy = match rule {
        BandwidthRule::Central => (sigma_max / (n * epsilon)).sqrt(),
        BandwidthRule::Local => (sigma_max / (n.sqrt() * epsilon)).sqrt(),
    };
    stat.max(privacy)
}

/// Interior band half-width `ζ = b √(2 ln(2/b))`.
pub fn interior_zeta(b: f64) -> f64 {
    b * (2.0 * (2.0 / b).ln()).sqrt()
}

/// Smoothness constants of the regression function and the noise bound.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RegressionConstants {
    /// `L_f`.
    pub lipschitz_f: f64,
    /// `‖f‖∞`.
    pub sup_f: f64,
    /// `σ²_max`.
    pub sigma2_max: f64,
    pub gamma: f64,
}

impl Default for RegressionConstants {
    fn default() -> Self {
        Self { lipschitz_f: 1.0, sup_f: 1.0, sigma2_max: 1.0, gamma: 0.1 }
    }
}

/// Concentration radius of the contributions:
/// `b(L_f μ₁ + ‖f‖∞) + (L_f‖K‖∞ + ‖f‖∞ L_K + √(2σ²‖K‖∞ ln(2n/γ)))/b`.
pub fn contribution_radius(kernel: &KernelSpec, b: f64, n: usize, c: &RegressionConstants) -> Result<f64> {
    if !(c.gamma > 0.0 && c.gamma < 1.0) {
        return Err(invalid_param(format!("gamma must lie in (0, 1), got {}", c.gamma)));
    }
    if !(c.sigma2_max > 0.0 && c.lipschitz_f >= 0.0 && c.sup_f >= 0.0) {
        return Err(invalid_param("regression constants must be nonnegative with positive sigma2_max"));
    }
    let bias = b * (c.lipschitz_f * kernel.first_abs_moment + c.sup_f);
    let spread = c.lipschitz_f * kernel.sup_norm
        + c.sup_f * kernel.lipschitz
        + (2.0 * c.sigma2_max * kernel.sup_norm * (2.0 * n as f64 / c.gamma).ln()).sqrt();
    Ok(bias + spread / b)
}

/// Private Priestley–Chao estimate at an interior point `x`.
#[allow(clippy::too_many_arguments)]
pub fn private_regression_point<R: Rng + ?Sized>(
    design: &FixedDesign,
    kernel: &KernelSpec,
    b: f64,
    x: f64,
    budget: &PrivacyBudget,
    rng: &mut R,
    model: PrivacyModel,
    constants: &RegressionConstants,
) -> Result<MeanEstimate> {
    check_args(b, x)?;
    if b > 1.0 {
        return Err(invalid_param(format!("bandwidth must not exceed 1, got {b}")));
    }
    let zeta = interior_zeta(b);
    if x < zeta || x > 1.0 - zeta {
        return Err(DpError::Boundary { x, zeta });
    }
    let contributions = contribution_vector(design, kernel, b, x)?;
    let tau = contribution_radius(kernel, b, design.n(), constants)?;
    let m = nalgebra::DMatrix::from_column_slice(contributions.len(), 1, &contributions);
    match model {
        PrivacyModel::Central => central_dispatch(&m, tau, budget, rng, IntervalMode::Default),
        PrivacyModel::Local { bound_b } => local_dispatch(&m, tau, budget.epsilon(), budget.varrho(), bound_b, rng),
    }
}

/// One row of a released regression curve.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CurvePoint {
    pub x: f64,
    pub estimate: f64,
    pub interval_lo: f64,
    pub interval_hi: f64,
    pub clipped_count: usize,
}

impl CurvePoint {
    pub fn from_estimate(x: f64, est: &MeanEstimate) -> Self {
        let iv = est.interval_per_dim[0];
        Self { x, estimate: est.value[0], interval_lo: iv.lo(), interval_hi: iv.hi(), clipped_count: est.clipped_count }
    }
}

pub fn write_curve_csv(path: impl AsRef<Path>, points: &[CurvePoint]) -> Result<()> {
    let mut w = csv::Writer::from_path(path.as_ref()).map_err(|e| DpError::Io(e.to_string()))?;
    for p in points {
        w.serialize(p).map_err(|e| DpError::Io(e.to_string()))?;
    }
    w.flush().map_err(|e| DpError::Io(e.to_string()))
}
