//! Private plug-in variance estimation by bisection and by CoinPress-style
//! refinement, each co-refining a rough first-moment estimate.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{invalid_input, invalid_param, Result};
use crate::histogram::{IntervalMode, ProjectionInterval};
use crate::mean::{clipped_mean, concentration_radius, winsorized_mean_1d_central, ConcentrationSpec, MeanEstimate};
use crate::mechanisms::{draw_laplace, PrivacyBudget};

/// `⌈log₂(σ²_max/σ²_min)⌉`.
pub fn iteration_count(sigma2_min: f64, sigma2_max: f64) -> Result<usize> {
    if !(sigma2_min > 0.0 && sigma2_max > sigma2_min && sigma2_max.is_finite()) {
        return Err(invalid_param(format!(
            "variance bounds must satisfy 0 < min < max, got ({sigma2_min}, {sigma2_max})"
        )));
    }
    Ok((sigma2_max / sigma2_min).log2().ceil() as usize)
}

/// Per-mechanism budget `ε/√(16 N ln(1/ϱ))`.
pub fn per_iteration_epsilon(budget: &PrivacyBudget, n_iter: usize) -> Result<f64> {
    let varrho = budget.varrho();
    if !(varrho > 0.0 && varrho < 1.0) {
        return Err(invalid_param(format!("variance search needs varrho in (0, 1), got {varrho}")));
    }
    Ok(budget.epsilon() / (16.0 * n_iter as f64 * (1.0 / varrho).ln()).sqrt())
}

/// `(1 + 2√ln(1/γ) + 2 ln(1/γ))^{1/2}`.
pub fn clipping_beta(gamma: f64) -> f64 {
    let l = (1.0 / gamma).ln();
    (1.0 + 2.0 * l.sqrt() + 2.0 * l).sqrt()
}

fn check_common(data: &[f64], epsilon: f64, sigma: f64) -> Result<()> {
    if data.is_empty() {
        return Err(invalid_input("no observations"));
    }
    if !(epsilon > 0.0) {
        return Err(invalid_param(format!("epsilon must be positive, got {epsilon}")));
    }
    if !(sigma > 0.0 && sigma.is_finite()) {
        return Err(invalid_param(format!("sigma must be positive, got {sigma}")));
    }
    Ok(())
}

fn check_gamma(gamma: f64) -> Result<()> {
    if !(gamma > 0.0 && gamma < 1.0) {
        return Err(invalid_param(format!("gamma must lie in (0, 1), got {gamma}")));
    }
    Ok(())
}

/// Private fraction of the data inside `[m̂ ± √2σ]`.
pub fn coverage<R: Rng + ?Sized>(data: &[f64], epsilon: f64, sigma: f64, m_hat: f64, rng: &mut R) -> Result<f64> {
    check_common(data, epsilon, sigma)?;
    let r = std::f64::consts::SQRT_2 * sigma;
    let inside = data.iter().filter(|&&x| x >= m_hat - r && x <= m_hat + r).count();
    let n = data.len() as f64;
    Ok(draw_laplace(inside as f64 / n, 2.0 / (n * epsilon), rng))
}

/// Clipped mean over `[m̂ ± √2σ]` plus `Lap(2√2σ/(nε))`.
pub fn refine_midpoint<R: Rng + ?Sized>(data: &[f64], epsilon: f64, sigma: f64, m_hat: f64, rng: &mut R) -> Result<f64> {
    check_common(data, epsilon, sigma)?;
    let tau_hat = std::f64::consts::SQRT_2 * sigma;
    let iv = ProjectionInterval { midpoint: m_hat, radius: tau_hat, histogram_failed: false };
    let (mean, _) = clipped_mean(data, &iv);
    Ok(draw_laplace(mean, 2.0 * tau_hat / (data.len() as f64 * epsilon), rng))
}

/// One variance refinement step.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VarianceStep {
    pub sigma: f64,
    pub z: f64,
    pub z_sigma2: f64,
}

/// Clips standardized residuals to `[−β, β]`, releases
/// `z = max(0, ‖w‖²/n + Lap(2β²/(nε)))` and updates
/// `σ ← σ (z + √(1/n) + 1/(2n))^{1/2}`.
pub fn refine_variance_step<R: Rng + ?Sized>(
    data: &[f64],
    epsilon: f64,
    sigma: f64,
    m_hat: f64,
    gamma: f64,
    rng: &mut R,
) -> Result<VarianceStep> {
    check_common(data, epsilon, sigma)?;
    check_gamma(gamma)?;
    let beta = clipping_beta(gamma);
    let n = data.len() as f64;
    let norm2: f64 = data
        .iter()
        .map(|&x| {
            let w = ((x - m_hat) / sigma).clamp(-beta, beta);
            w * w
        })
        .sum();
    let z = draw_laplace(norm2 / n, 2.0 * beta * beta / (n * epsilon), rng).max(0.0);
    let sigma = sigma * (z + (1.0 / n).sqrt() + 1.0 / (2.0 * n)).sqrt();
    Ok(VarianceStep { sigma, z, z_sigma2: z * sigma * sigma })
}

/// Returns `(σ_new, z σ_new²)`.
pub fn refine_variance<R: Rng + ?Sized>(
    data: &[f64],
    epsilon: f64,
    sigma: f64,
    m_hat: f64,
    gamma: f64,
    rng: &mut R,
) -> Result<(f64, f64)> {
    let s = refine_variance_step(data, epsilon, sigma, m_hat, gamma, rng)?;
    Ok((s.sigma, s.z_sigma2))
}

/// Per-iteration record of a variance search.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IterationLog {
    pub sigma2_hi: f64,
    /// Released coverage (bisection) or `z` (CoinPress).
    pub statistic: f64,
    pub midpoint: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VarianceSearchState {
    pub sigma2_lo: f64,
    pub sigma2_hi: f64,
    pub midpoint: f64,
    pub iterations_used: usize,
    pub n_iter: usize,
    pub epsilon_per_mechanism: f64,
    /// Set when CoinPress had to raise a released variance to `σ²_min`.
    pub floored: bool,
    pub log: Vec<IterationLog>,
}

impl VarianceSearchState {
    fn new(bounds: (f64, f64), m_hat: f64, n_iter: usize, eps: f64) -> Self {
        Self {
            sigma2_lo: bounds.0,
            sigma2_hi: bounds.1,
            midpoint: m_hat,
            iterations_used: 0,
            n_iter,
            epsilon_per_mechanism: eps,
            floored: false,
            log: Vec::new(),
        }
    }

    /// Privacy guarantee of the `2 N_iter` mechanisms at `ε′` under advanced
    /// composition: `(ε′ √(16 N ln(1/ϱ)), δ, ϱ)`.
    pub fn accounted_budget(&self, budget: &PrivacyBudget) -> Result<PrivacyBudget> {
        let eps = self.epsilon_per_mechanism * (8.0 * 2.0 * self.n_iter as f64 * (1.0 / budget.varrho()).ln()).sqrt();
        PrivacyBudget::new(eps, budget.delta(), budget.varrho())
    }
}

fn search_setup(data: &[f64], budget: &PrivacyBudget, bounds: (f64, f64), gamma: f64) -> Result<(usize, f64)> {
    if data.is_empty() {
        return Err(invalid_input("no observations"));
    }
    check_gamma(gamma)?;
    let n_iter = iteration_count(bounds.0, bounds.1)?;
    Ok((n_iter, per_iteration_epsilon(budget, n_iter)?))
}

/// Order of the two mechanisms inside one bisection iteration.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BisectionOrder {
    /// Refine the midpoint with the current bound, then test coverage around
    /// the refined midpoint.
    #[default]
    RefineFirst,
    /// Test coverage around the incoming midpoint, then refine it.
    CoverageFirst,
}

/// Halves the variance upper bound while the private coverage of
/// `[m̂ ± √2σ_max]` stays at least `1 − γ`, for at most `N_iter` halvings.
/// Returns the bound in force when the loop stops.
pub fn variance_bisection<R: Rng + ?Sized>(
    data: &[f64],
    budget: &PrivacyBudget,
    bounds: (f64, f64),
    m_hat: f64,
    gamma: f64,
    rng: &mut R,
) -> Result<(f64, VarianceSearchState)> {
    variance_bisection_with(data, budget, bounds, m_hat, gamma, BisectionOrder::default(), rng)
}

pub fn variance_bisection_with<R: Rng + ?Sized>(
    data: &[f64],
    budget: &PrivacyBudget,
    bounds: (f64, f64),
    m_hat: f64,
    gamma: f64,
    order: BisectionOrder,
    rng: &mut R,
) -> Result<(f64, VarianceSearchState)> {
    let (n_iter, eps) = search_setup(data, budget, bounds, gamma)?;
    let mut st = VarianceSearchState::new(bounds, m_hat, n_iter, eps);
    while st.iterations_used < n_iter {
        let sigma = st.sigma2_hi.sqrt();
        let cov = match order {
            BisectionOrder::RefineFirst => {
                st.midpoint = refine_midpoint(data, eps, sigma, st.midpoint, rng)?;
                coverage(data, eps, sigma, st.midpoint, rng)?
            }
            BisectionOrder::CoverageFirst => {
                let cov = coverage(data, eps, sigma, st.midpoint, rng)?;
                if cov >= 1.0 - gamma {
                    st.midpoint = refine_midpoint(data, eps, sigma, st.midpoint, rng)?;
                }
                cov
            }
        };
        st.log.push(IterationLog { sigma2_hi: st.sigma2_hi, statistic: cov, midpoint: st.midpoint });
        if cov < 1.0 - gamma {
            break;
        }
        st.sigma2_hi /= 2.0;
        st.iterations_used += 1;
    }
    Ok((st.sigma2_hi, st))
}

/// `N_iter` rounds of midpoint refinement at `√σ²_max` followed by a
/// CoinPress variance step. Released variances below `σ²_min` are raised to
/// `σ²_min` and flagged.
pub fn adaptive_coinpress<R: Rng + ?Sized>(
    data: &[f64],
    budget: &PrivacyBudget,
    bounds: (f64, f64),
    m_hat: f64,
    gamma: f64,
    rng: &mut R,
) -> Result<(f64, VarianceSearchState)> {
    let (n_iter, eps) = search_setup(data, budget, bounds, gamma)?;
    let mut st = VarianceSearchState::new(bounds, m_hat, n_iter, eps);
    let mut sigma = bounds.1.sqrt();
    for _ in 0..n_iter {
        st.midpoint = refine_midpoint(data, eps, st.sigma2_hi.sqrt(), st.midpoint, rng)?;
        let step = refine_variance_step(data, eps, sigma, st.midpoint, gamma, rng)?;
        sigma = step.sigma;
        if step.z_sigma2 < bounds.0 {
            st.floored = true;
            st.sigma2_hi = bounds.0;
        } else {
            st.sigma2_hi = step.z_sigma2;
        }
        if !(sigma > 0.0) {
            sigma = bounds.0.sqrt();
            st.floored = true;
        }
        st.iterations_used += 1;
        st.log.push(IterationLog { sigma2_hi: st.sigma2_hi, statistic: step.z, midpoint: st.midpoint });
    }
    Ok((st.sigma2_hi, st))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum VarianceMethod {
    Bisection,
    CoinPress,
}

/// Winsorized mean whose radius `τ = √(2σ̂² ln(2n/γ))` uses a privately
/// estimated variance. The variance search and the mean spend separate
/// budgets.
#[allow(clippy::too_many_arguments)]
pub fn plugin_winsorized_mean<R: Rng + ?Sized>(
    data: &[f64],
    mean_budget: &PrivacyBudget,
    variance_budget: &PrivacyBudget,
    bounds: (f64, f64),
    m_hat: f64,
    gamma: f64,
    method: VarianceMethod,
    rng: &mut R,
) -> Result<(MeanEstimate, VarianceSearchState)> {
    let (sigma2, state) = match method {
        VarianceMethod::Bisection => variance_bisection(data, variance_budget, bounds, m_hat, gamma, rng)?,
        VarianceMethod::CoinPress => adaptive_coinpress(data, variance_budget, bounds, m_hat, gamma, rng)?,
    };
    let tau = concentration_radius(&ConcentrationSpec::new(sigma2, gamma), data.len(), 1, 1)?;
    let est = winsorized_mean_1d_central(data, tau, mean_budget, rng, IntervalMode::Default)?;
    Ok((est, state))
}
