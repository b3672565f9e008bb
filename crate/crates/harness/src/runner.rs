//! Seed-indexed Monte-Carlo replications over the `(n, T)` grid.

use std::time::Instant;

use dpdep::mean::{
    concentration_radius, winsorized_mean_1d_central, winsorized_mean_1d_local, winsorized_mean_hd_central,
    winsorized_mean_hd_local, winsorized_mean_split, ConcentrationSpec, MeanEstimate,
};
use dpdep::mechanisms::{PrivacyBudget, RngStream};
use dpdep::nonparam::{private_regression_point, select_bandwidth, BandwidthRule, KernelSpec, RegressionConstants};
use dpdep::synth::{
    log_sobolev_constant, sample_fixed_design, sample_random_effects, sample_regression, CovarianceSpec,
    GaussianSampler,
};
use dpdep::user_level::{
    private_longitudinal_regression, random_effects_location, random_effects_rho, user_level_mean_central,
    user_level_mean_local, PrivacyModel, RegressionBounds, UserDataMatrix,
};
use dpdep::variance::{plugin_winsorized_mean, VarianceMethod};
use dpdep::DpError;
use nalgebra::DMatrix;
use rand::Rng;
use rayon::prelude::*;
use thiserror::Error;

use crate::config::{DesignKind, Estimator, ExperimentConfig};
use crate::stats::{aggregate, Replication, SummaryStats};

#[derive(Debug, Error)]
pub enum RunError {
    #[error("grid point n = {n}, T = {t}: {source}")]
    Estimator {
        n: usize,
        t: usize,
        #[source]
        source: DpError,
    },
    #[error("thread pool: {0}")]
    Pool(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct RunOptions {
    /// Worker threads; `None` uses rayon's default.
    pub threads: Option<usize>,
    pub seed_override: Option<u64>,
}

/// Read-only state shared by the replications of one grid point.
struct GridPoint<'a> {
    cfg: &'a ExperimentConfig,
    n: usize,
    t: usize,
    d: usize,
    budget: PrivacyBudget,
    truth: Vec<f64>,
    rho_data: f64,
    seed: u64,
    kind: Prepared,
}

enum Prepared {
    Items { sampler: GaussianSampler, tau: f64 },
    Users { sampler: GaussianSampler, spec: ConcentrationSpec },
    RandomEffects { per_user: CovarianceSpec, group_sizes: Vec<usize>, spec: ConcentrationSpec },
    Regression { designs: Vec<DMatrix<f64>>, noise: CovarianceSpec, bounds: RegressionBounds, model: PrivacyModel },
    Nonparam { noise: CovarianceSpec, kernel: KernelSpec, bandwidth: f64, constants: RegressionConstants },
}

/// Design with columns `√2 cos(2πki/T + φ)`, `√2 sin(2πki/T + φ)` for
/// `k = 1, 2, …`; satisfies `XᵀX = T·I` when `2k < T`.
pub fn orthogonal_design(t: usize, p: usize, phase: f64) -> DMatrix<f64> {
    let s = 2f64.sqrt();
    DMatrix::from_fn(t, p, |i, j| {
        let k = (j / 2 + 1) as f64;
        let a = 2.0 * std::f64::consts::PI * k * i as f64 / t as f64 + phase;
        s * if j % 2 == 0 { a.cos() } else { a.sin() }
    })
}

fn max_diagonal(spec: &CovarianceSpec) -> Result<f64, DpError> {
    Ok(spec.diagonal()?.into_iter().fold(0.0, f64::max))
}

fn grid_seed(base: u64, index: usize) -> u64 {
    RngStream::new(base, index as u64).derive(0).seed
}

impl<'a> GridPoint<'a> {
    fn new(cfg: &'a ExperimentConfig, index: usize, n: usize, t: usize, base_seed: u64) -> Result<Self, DpError> {
        let d = cfg.data.d;
        let eps = cfg.privacy.epsilon.at(n);
        let budget = PrivacyBudget::new(eps, cfg.privacy.delta.at(n), cfg.privacy.varrho.at(n))?;
        let seed = grid_seed(base_seed, index);
        let mu = cfg.data.mean;
        let gamma = cfg.gamma;
        let (kind, truth, rho_data) = match cfg.estimator {
            Estimator::UserLevelCentral | Estimator::UserLevelLocal => {
                let per_user = cfg.data.covariance.realize(t);
                let rho_data = log_sobolev_constant(&per_user)?.rho;
                let spec = ConcentrationSpec::new(cfg.rho.unwrap_or(rho_data), gamma);
                (Prepared::Users { sampler: GaussianSampler::new(&per_user)?, spec }, vec![mu; d], rho_data)
            }
            Estimator::RandomEffects => {
                let re = cfg.random_effects.expect("validated");
                let per_user = cfg.data.covariance.realize(t);
                let group_sizes = vec![re.group_size; n / re.group_size];
                let sigma2 = log_sobolev_constant(&per_user)?.rho;
                let rho_data = random_effects_rho(re.sigma_u2, &group_sizes, t, sigma2);
                let spec = ConcentrationSpec::new(cfg.rho.unwrap_or(rho_data), gamma);
                (Prepared::RandomEffects { per_user, group_sizes, spec }, vec![mu], rho_data)
            }
            Estimator::LongitudinalRegression => {
                let r = cfg.regression.as_ref().expect("validated");
                let p = r.beta.len();
                let noise = cfg.data.covariance.realize(t);
                let rho_data = log_sobolev_constant(&noise)?.rho;
                let mut rng = RngStream::new(seed, u64::MAX).rng();
                let designs: Vec<DMatrix<f64>> = match r.design {
                    DesignKind::Orthogonal => (0..n)
                        .map(|_| orthogonal_design(t, p, rng.random_range(0.0..std::f64::consts::TAU)))
                        .collect(),
                    DesignKind::Gaussian => (0..n)
                        .map(|_| {
                            DMatrix::from_fn(t, p, |_, _| {
                                let z: f64 = rand_distr::Distribution::sample(&rand_distr::StandardNormal, &mut rng);
                                z
                            })
                        })
                        .collect(),
                };
                let bounds = RegressionBounds {
                    theta: r.theta.unwrap_or(1.0),
                    vartheta: r.vartheta.unwrap_or(1.0),
                    sigma2: r.sigma2.unwrap_or(rho_data),
                    gamma,
                };
                (Prepared::Regression { designs, noise, bounds, model: r.model }, r.beta.clone(), rho_data)
            }
            Estimator::NonparamPoint => {
                let np = cfg.nonparam.as_ref().expect("validated");
                let noise = cfg.data.covariance.realize(n);
                let rho_data = log_sobolev_constant(&noise)?.rho;
                let rule = match np.model {
                    PrivacyModel::Central => BandwidthRule::Central,
                    PrivacyModel::Local { .. } => BandwidthRule::Local,
                };
                let bandwidth = np.bandwidth.unwrap_or_else(|| select_bandwidth(n, rho_data.sqrt(), eps, rule));
                let constants = RegressionConstants {
                    lipschitz_f: np.function.lipschitz(),
                    sup_f: np.function.sup_norm(),
                    sigma2_max: rho_data,
                    gamma,
                };
                let truth = vec![np.function.eval(np.x)];
                (Prepared::Nonparam { noise, kernel: KernelSpec::gaussian(), bandwidth, constants }, truth, rho_data)
            }
            _ => {
                let cov = cfg.data.covariance.realize(n);
                let rho_data = log_sobolev_constant(&cov)?.rho;
                let rho = match cfg.rho {
                    Some(r) => r,
                    None => max_diagonal(&cov)?,
                };
                let tau = concentration_radius(&ConcentrationSpec::new(rho, gamma), n, d, 1)?;
                (Prepared::Items { sampler: GaussianSampler::new(&cov)?, tau }, vec![mu; d], rho_data)
            }
        };
        Ok(Self { cfg, n, t, d, budget, truth, rho_data, seed, kind })
    }

    fn item_matrix<R: Rng + ?Sized>(&self, sampler: &GaussianSampler, rng: &mut R) -> DMatrix<f64> {
        let mut m = DMatrix::zeros(self.n, self.d);
        for j in 0..self.d {
            let mut col = m.column_mut(j);
            let slice = col.as_mut_slice();
            sampler.sample_into(rng, slice);
            for v in slice.iter_mut() {
                *v += self.cfg.data.mean;
            }
        }
        m
    }

    fn replicate(&self, r: usize) -> Result<Replication, DpError> {
        let mut rng = RngStream::new(self.seed, r as u64).rng();
        let cfg = self.cfg;
        let b = &self.budget;
        let bound_b = cfg.bound_b.unwrap_or(f64::NAN);
        let (estimate, est): (Vec<f64>, Option<MeanEstimate>) = match &self.kind {
            Prepared::Items { sampler, tau } => {
                let x = self.item_matrix(sampler, &mut rng);
                let col = |m: &DMatrix<f64>| m.column(0).iter().copied().collect::<Vec<f64>>();
                let est = match cfg.estimator {
                    Estimator::NonprivateMean => {
                        let means = (0..self.d).map(|j| x.column(j).mean()).collect();
                        return Ok(self.finish(means, None));
                    }
                    Estimator::Central1d => winsorized_mean_1d_central(&col(&x), *tau, b, &mut rng, cfg.interval_mode)?,
                    Estimator::CentralHd => winsorized_mean_hd_central(&x, *tau, b, &mut rng, cfg.interval_mode)?,
                    Estimator::Local1d => winsorized_mean_1d_local(&col(&x), *tau, b.epsilon(), bound_b, &mut rng)?,
                    Estimator::LocalHd => winsorized_mean_hd_local(&x, *tau, b.epsilon(), b.varrho(), bound_b, &mut rng)?,
                    Estimator::Split => {
                        let z = self.item_matrix(sampler, &mut rng);
                        winsorized_mean_split(&z, &x, *tau, b, &mut rng)?
                    }
                    Estimator::PluginBisection | Estimator::PluginCoinpress => {
                        let v = cfg.variance.expect("validated");
                        let method = if cfg.estimator == Estimator::PluginBisection {
                            VarianceMethod::Bisection
                        } else {
                            VarianceMethod::CoinPress
                        };
                        let mean_budget = PrivacyBudget::new(b.epsilon(), b.delta(), 0.0)?;
                        let (est, _) = plugin_winsorized_mean(
                            &col(&x),
                            &mean_budget,
                            b,
                            (v.sigma2_min, v.sigma2_max),
                            v.m_hat,
                            cfg.gamma,
                            method,
                            &mut rng,
                        )?;
                        est
                    }
                    _ => unreachable!("item-level estimators only"),
                };
                (est.value.clone(), Some(est))
            }
            Prepared::Users { sampler, spec } => {
                let mut data = DMatrix::zeros(self.n * self.t, self.d);
                let mut block = vec![0.0; self.t];
                for j in 0..self.d {
                    for u in 0..self.n {
                        sampler.sample_into(&mut rng, &mut block);
                        for (i, v) in block.iter().enumerate() {
                            data[(u * self.t + i, j)] = v + cfg.data.mean;
                        }
                    }
                }
                let x = UserDataMatrix::new(self.n, self.t, data)?;
                let est = if cfg.estimator == Estimator::UserLevelCentral {
                    user_level_mean_central(&x, spec, b, &mut rng)?
                } else {
                    user_level_mean_local(&x, spec, b.epsilon(), b.varrho(), bound_b, &mut rng)?
                };
                (est.value.clone(), Some(est))
            }
            Prepared::RandomEffects { per_user, group_sizes, spec } => {
                let re = cfg.random_effects.expect("validated");
                let (y, labels) =
                    sample_random_effects(cfg.data.mean, re.sigma_u2, group_sizes, self.t, per_user, &mut rng)?;
                let est = random_effects_location(&y, &labels, spec, b, &mut rng, PrivacyModel::Central)?;
                (est.value.clone(), Some(est))
            }
            Prepared::Regression { designs, noise, bounds, model } => {
                let ds = sample_regression(&self.truth, designs, std::slice::from_ref(noise), &mut rng)?;
                let est = private_longitudinal_regression(&ds, bounds, b, &mut rng, *model)?;
                (est.value.clone(), Some(est))
            }
            Prepared::Nonparam { noise, kernel, bandwidth, constants } => {
                let np = cfg.nonparam.as_ref().expect("validated");
                let f = |x: f64| np.function.eval(x);
                let design = sample_fixed_design(&f, self.n, noise, &mut rng)?;
                let est =
                    private_regression_point(&design, kernel, *bandwidth, np.x, b, &mut rng, np.model, constants)?;
                (est.value.clone(), Some(est))
            }
        };
        Ok(self.finish(estimate, est.as_ref()))
    }

    fn finish(&self, estimate: Vec<f64>, est: Option<&MeanEstimate>) -> Replication {
        let sq_error = estimate.iter().zip(&self.truth).map(|(a, b)| (a - b).powi(2)).sum();
        let (histogram_failed, clip_fraction) = match est {
            Some(e) => (e.any_histogram_failed(), e.clipped_count as f64 / (self.n * e.dim()) as f64),
            None => (false, 0.0),
        };
        Replication { estimate, sq_error, histogram_failed, clip_fraction }
    }
}

fn run_grid(cfg: &ExperimentConfig, base_seed: u64) -> Result<Vec<SummaryStats>, RunError> {
    let mut out = Vec::new();
    for (index, (n, t)) in cfg.grid().into_iter().enumerate() {
        let wrap = |source| RunError::Estimator { n, t, source };
        let start = Instant::now();
        let point = GridPoint::new(cfg, index, n, t, base_seed).map_err(wrap)?;
        let reps = (0..cfg.replications)
            .into_par_iter()
            .map(|r| point.replicate(r))
            .collect::<Result<Vec<_>, _>>()
            .map_err(wrap)?;
        let agg = aggregate(&reps, &point.truth);
        out.push(SummaryStats {
            experiment_id: cfg.experiment_id.clone(),
            estimator: cfg.estimator.name().to_string(),
            n,
            t,
            d: point.d,
            epsilon: point.budget.epsilon(),
            delta: point.budget.delta(),
            rho_data: point.rho_data,
            mse: agg.mse,
            median_se: agg.median_se,
            iqr_lo: agg.iqr_lo,
            iqr_hi: agg.iqr_hi,
            bias_sq: agg.bias_sq,
            variance: agg.variance,
            hist_failure_rate: agg.hist_failure_rate,
            clip_rate: agg.clip_rate,
            k: cfg.replications,
            base_seed,
            runtime_secs: start.elapsed().as_secs_f64(),
        });
    }
    Ok(out)
}

/// Runs every grid point of `cfg`. Replication `r` of grid point `g` draws
/// from stream `r` of a seed derived from `(base_seed, g)`, so the result
/// does not depend on the thread count.
pub fn run_experiment(cfg: &ExperimentConfig, opts: RunOptions) -> Result<Vec<SummaryStats>, RunError> {
    let base_seed = opts.seed_override.unwrap_or(cfg.base_seed);
    match opts.threads {
        Some(threads) => {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(threads)
                .build()
                .map_err(|e| RunError::Pool(e.to_string()))?;
            pool.install(|| run_grid(cfg, base_seed))
        }
        None => run_grid(cfg, base_seed),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn orthogonal_design_is_orthogonal() {
        for (t, p) in [(7usize, 2usize), (20, 5), (3, 1)] {
            let x = orthogonal_design(t, p, 0.3);
            let g = x.transpose() * &x / t as f64;
            assert!((g - DMatrix::<f64>::identity(p, p)).amax() < 1e-12, "T = {t}, p = {p}");
        }
    }

    #[test]
    fn grid_seeds_differ() {
        assert_ne!(grid_seed(1, 0), grid_seed(1, 1));
        assert_ne!(grid_seed(1, 0), grid_seed(2, 0));
    }
}
