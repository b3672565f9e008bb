//! Experiment configuration, accepted as TOML or JSON.

use std::path::Path;

use dpdep::histogram::IntervalMode;
use dpdep::synth::CovarianceSpec;
use dpdep::user_level::PrivacyModel;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read config {path}: {message}")]
    Read { path: String, message: String },
    #[error("cannot parse config: {0}")]
    Parse(String),
    #[error("invalid config field `{field}`: {message}")]
    Field { field: &'static str, message: String },
}

fn field(field: &'static str, message: impl Into<String>) -> ConfigError {
    ConfigError::Field { field, message: message.into() }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Estimator {
    NonprivateMean,
    #[serde(rename = "central_1d")]
    Central1d,
    CentralHd,
    #[serde(rename = "local_1d")]
    Local1d,
    LocalHd,
    UserLevelCentral,
    UserLevelLocal,
    Split,
    RandomEffects,
    LongitudinalRegression,
    NonparamPoint,
    PluginBisection,
    PluginCoinpress,
}

impl Estimator {
    pub fn name(self) -> &'static str {
        match self {
            Estimator::NonprivateMean => "nonprivate_mean",
            Estimator::Central1d => "central_1d",
            Estimator::CentralHd => "central_hd",
            Estimator::Local1d => "local_1d",
            Estimator::LocalHd => "local_hd",
            Estimator::UserLevelCentral => "user_level_central",
            Estimator::UserLevelLocal => "user_level_local",
            Estimator::Split => "split",
            Estimator::RandomEffects => "random_effects",
            Estimator::LongitudinalRegression => "longitudinal_regression",
            Estimator::NonparamPoint => "nonparam_point",
            Estimator::PluginBisection => "plugin_bisection",
            Estimator::PluginCoinpress => "plugin_coinpress",
        }
    }

    /// Estimators whose covariance template describes one user's `T`
    /// observations rather than the `n` items.
    pub fn is_user_level(self) -> bool {
        matches!(
            self,
            Estimator::UserLevelCentral
                | Estimator::UserLevelLocal
                | Estimator::RandomEffects
                | Estimator::LongitudinalRegression
        )
    }

    fn needs_bound_b(self) -> bool {
        matches!(self, Estimator::Local1d | Estimator::LocalHd | Estimator::UserLevelLocal)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CovarianceRule {
    #[default]
    Constant,
    /// `c / (dim − 1)`.
    OverDimMinusOne,
}

/// Covariance family whose dimension is fixed per grid point.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum CovarianceTemplate {
    #[default]
    Identity,
    Toeplitz {
        decay: f64,
    },
    Equicorrelated {
        variance: f64,
        covariance: f64,
        #[serde(default)]
        rule: CovarianceRule,
    },
}

impl CovarianceTemplate {
    pub fn realize(&self, dimension: usize) -> CovarianceSpec {
        match *self {
            CovarianceTemplate::Identity => CovarianceSpec::identity(dimension),
            CovarianceTemplate::Toeplitz { decay } => CovarianceSpec::toeplitz(decay, dimension),
            CovarianceTemplate::Equicorrelated { variance, covariance, rule } => {
                let c = match rule {
                    CovarianceRule::Constant => covariance,
                    CovarianceRule::OverDimMinusOne => covariance / (dimension.max(2) - 1) as f64,
                };
                CovarianceSpec::equicorrelated(variance, c, dimension)
            }
        }
    }
}

fn default_t_grid() -> Vec<usize> {
    vec![1]
}

fn one() -> usize {
    1
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DataConfig {
    /// Common value of every coordinate of the true mean.
    #[serde(default)]
    pub mean: f64,
    #[serde(default)]
    pub covariance: CovarianceTemplate,
    pub n: Vec<usize>,
    #[serde(rename = "T", alias = "t", default = "default_t_grid")]
    pub t: Vec<usize>,
    #[serde(default = "one")]
    pub d: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "rule", rename_all = "snake_case")]
pub enum EpsilonRule {
    Constant { value: f64 },
    /// `c / √n`.
    OverSqrtN { c: f64 },
}

impl EpsilonRule {
    pub fn at(self, n: usize) -> f64 {
        match self {
            EpsilonRule::Constant { value } => value,
            EpsilonRule::OverSqrtN { c } => c / (n as f64).sqrt(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(tag = "rule", rename_all = "snake_case")]
pub enum SlackRule {
    #[default]
    Zero,
    Constant {
        value: f64,
    },
    /// `1 / n²`.
    InverseNSquared,
}

impl SlackRule {
    pub fn at(self, n: usize) -> f64 {
        match self {
            SlackRule::Zero => 0.0,
            SlackRule::Constant { value } => value,
            SlackRule::InverseNSquared => 1.0 / (n as f64 * n as f64),
        }
    }
}

fn inverse_n_squared() -> SlackRule {
    SlackRule::InverseNSquared
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PrivacyConfig {
    pub epsilon: EpsilonRule,
    #[serde(default = "inverse_n_squared")]
    pub delta: SlackRule,
    #[serde(default)]
    pub varrho: SlackRule,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VarianceConfig {
    pub m_hat: f64,
    pub sigma2_min: f64,
    pub sigma2_max: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RandomEffectsConfig {
    pub sigma_u2: f64,
    /// Users per group; must divide every `n` of the grid.
    pub group_size: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DesignKind {
    /// Rows `√2(cos 2πki/T + φ_u, sin 2πki/T + φ_u)` for `k = 1…`, so that
    /// `X_uᵀX_u = T·I` exactly.
    #[default]
    Orthogonal,
    /// I.i.d. standard normal entries, drawn once per grid point.
    Gaussian,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RegressionConfig {
    pub beta: Vec<f64>,
    #[serde(default)]
    pub design: DesignKind,
    #[serde(default)]
    pub theta: Option<f64>,
    #[serde(default)]
    pub vartheta: Option<f64>,
    #[serde(default)]
    pub sigma2: Option<f64>,
    #[serde(default = "central_model")]
    pub model: PrivacyModel,
}

fn central_model() -> PrivacyModel {
    PrivacyModel::Central
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum RegressionFunction {
    /// `0.5 sin(2πx) + 0.5`.
    Sine,
    Linear,
    Constant { value: f64 },
}

impl RegressionFunction {
    pub fn eval(self, x: f64) -> f64 {
        match self {
            RegressionFunction::Sine => 0.5 * (2.0 * std::f64::consts::PI * x).sin() + 0.5,
            RegressionFunction::Linear => x,
            RegressionFunction::Constant { value } => value,
        }
    }

    pub fn lipschitz(self) -> f64 {
        match self {
            RegressionFunction::Sine => std::f64::consts::PI,
            RegressionFunction::Linear => 1.0,
            RegressionFunction::Constant { .. } => 0.0,
        }
    }

    pub fn sup_norm(self) -> f64 {
        match self {
            RegressionFunction::Sine | RegressionFunction::Linear => 1.0,
            RegressionFunction::Constant { value } => value.abs(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NonparamConfig {
    pub x: f64,
    pub function: RegressionFunction,
    /// Fixed bandwidth; chosen by `select_bandwidth` when absent.
    #[serde(default)]
    pub bandwidth: Option<f64>,
    #[serde(default = "central_model")]
    pub model: PrivacyModel,
}

fn default_gamma() -> f64 {
    0.1
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(default = "default_experiment_id")]
    pub experiment_id: String,
    pub estimator: Estimator,
    pub data: DataConfig,
    pub privacy: PrivacyConfig,
    #[serde(default)]
    pub interval_mode: IntervalMode,
    #[serde(alias = "k")]
    pub replications: usize,
    pub base_seed: u64,
    #[serde(default = "default_gamma")]
    pub gamma: f64,
    /// Overrides the concentration constant used for `τ`.
    #[serde(default)]
    pub rho: Option<f64>,
    #[serde(default)]
    pub bound_b: Option<f64>,
    #[serde(default)]
    pub variance: Option<VarianceConfig>,
    #[serde(default)]
    pub random_effects: Option<RandomEffectsConfig>,
    #[serde(default)]
    pub regression: Option<RegressionConfig>,
    #[serde(default)]
    pub nonparam: Option<NonparamConfig>,
}

fn default_experiment_id() -> String {
    "experiment".to_string()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ConfigFormat {
    Toml,
    Json,
}

impl ExperimentConfig {
    pub fn from_str_as(text: &str, format: ConfigFormat) -> Result<Self, ConfigError> {
        let cfg: Self = match format {
            ConfigFormat::Toml => toml::from_str(text).map_err(|e| ConfigError::Parse(e.to_string()))?,
            ConfigFormat::Json => serde_json::from_str(text).map_err(|e| ConfigError::Parse(e.to_string()))?,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    /// Reads a config from disk. `.json` files are parsed as JSON, anything
    /// else as TOML.
    pub fn load(path: impl AsRef<Path>) -> Result<Self, ConfigError> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path)
            .map_err(|e| ConfigError::Read { path: path.display().to_string(), message: e.to_string() })?;
        let format = match path.extension().and_then(|e| e.to_str()) {
            Some(ext) if ext.eq_ignore_ascii_case("json") => ConfigFormat::Json,
            _ => ConfigFormat::Toml,
        };
        Self::from_str_as(&text, format)
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let data = &self.data;
        if data.n.is_empty() {
            return Err(field("data.n", "grid must be nonempty"));
        }
        if data.t.is_empty() {
            return Err(field("data.T", "grid must be nonempty"));
        }
        if data.n.contains(&0) {
            return Err(field("data.n", "grid entries must be positive"));
        }
        if data.t.contains(&0) {
            return Err(field("data.T", "grid entries must be positive"));
        }
        if data.d == 0 {
            return Err(field("data.d", "must be positive"));
        }
        if self.replications == 0 {
            return Err(field("replications", "k must be at least 1"));
        }
        if !(self.gamma > 0.0 && self.gamma < 1.0) {
            return Err(field("gamma", format!("must lie in (0, 1), got {}", self.gamma)));
        }
        if let Some(rho) = self.rho {
            if !(rho > 0.0 && rho.is_finite()) {
                return Err(field("rho", format!("must be positive, got {rho}")));
            }
        }
        match self.privacy.epsilon {
            EpsilonRule::Constant { value } if !(value > 0.0 && value.is_finite()) => {
                return Err(field("privacy.epsilon", format!("must be positive, got {value}")));
            }
            EpsilonRule::OverSqrtN { c } if !(c > 0.0 && c.is_finite()) => {
                return Err(field("privacy.epsilon", format!("c must be positive, got {c}")));
            }
            _ => {}
        }
        for (name, rule) in [("privacy.delta", self.privacy.delta), ("privacy.varrho", self.privacy.varrho)] {
            if let SlackRule::Constant { value } = rule {
                if !(0.0..1.0).contains(&value) {
                    return Err(field(name, format!("must lie in [0, 1), got {value}")));
                }
            }
        }
        let cov_dims: Vec<usize> = if self.estimator.is_user_level() { data.t.clone() } else { data.n.clone() };
        for &dim in &cov_dims {
            self.data
                .covariance
                .realize(dim)
                .validate()
                .map_err(|e| field("data.covariance", e.to_string()))?;
        }
        self.validate_estimator()
    }

    fn validate_estimator(&self) -> Result<(), ConfigError> {
        let e = self.estimator;
        let d = self.data.d;
        if e.needs_bound_b() {
            match self.bound_b {
                None => return Err(field("bound_b", format!("{} needs bound_b", e.name()))),
                Some(b) if !(b > 0.0) => return Err(field("bound_b", format!("must be positive, got {b}"))),
                _ => {}
            }
        }
        let one_d = matches!(
            e,
            Estimator::Central1d
                | Estimator::Local1d
                | Estimator::RandomEffects
                | Estimator::NonparamPoint
                | Estimator::PluginBisection
                | Estimator::PluginCoinpress
        );
        if one_d && d != 1 {
            return Err(field("data.d", format!("{} is one-dimensional, got d = {d}", e.name())));
        }
        let composed = matches!(e, Estimator::CentralHd | Estimator::LocalHd | Estimator::Split)
            || (matches!(e, Estimator::UserLevelCentral | Estimator::UserLevelLocal) && d > 1);
        if composed && self.privacy.varrho == SlackRule::Zero {
            return Err(field("privacy.varrho", format!("{} composes over coordinates and needs varrho > 0", e.name())));
        }
        if matches!(e, Estimator::CentralHd | Estimator::Split) {
            if let EpsilonRule::Constant { value } = self.privacy.epsilon {
                if value > 1.0 {
                    return Err(field("privacy.epsilon", format!("{} requires epsilon <= 1, got {value}", e.name())));
                }
            }
        }
        if !e.is_user_level() && self.data.t != [1] {
            return Err(field("data.T", format!("{} is item-level; T must be [1]", e.name())));
        }
        match e {
            Estimator::PluginBisection | Estimator::PluginCoinpress => {
                let v = self.variance.ok_or_else(|| field("variance", format!("{} needs a variance block", e.name())))?;
                if !(v.sigma2_min > 0.0 && v.sigma2_max > v.sigma2_min) {
                    return Err(field("variance", "bounds must satisfy 0 < sigma2_min < sigma2_max"));
                }
                if self.privacy.varrho == SlackRule::Zero {
                    return Err(field("privacy.varrho", "the variance search needs varrho > 0"));
                }
            }
            Estimator::RandomEffects => {
                let r = self
                    .random_effects
                    .ok_or_else(|| field("random_effects", "random_effects needs a random_effects block"))?;
                if r.group_size == 0 || self.data.n.iter().any(|n| n % r.group_size != 0) {
                    return Err(field("random_effects.group_size", "must be positive and divide every n"));
                }
                if !(r.sigma_u2 >= 0.0) {
                    return Err(field("random_effects.sigma_u2", "must be nonnegative"));
                }
            }
            Estimator::LongitudinalRegression => {
                let r = self
                    .regression
                    .as_ref()
                    .ok_or_else(|| field("regression", "longitudinal_regression needs a regression block"))?;
                if r.beta.is_empty() {
                    return Err(field("regression.beta", "must be nonempty"));
                }
                if r.beta.len() != d {
                    return Err(field("data.d", format!("must equal the length of regression.beta ({})", r.beta.len())));
                }
                if r.design == DesignKind::Orthogonal {
                    let freq = r.beta.len().div_ceil(2);
                    if let Some(&t) = self.data.t.iter().find(|&&t| 2 * freq >= t) {
                        return Err(field("data.T", format!("orthogonal design with p = {} needs T > {}, got {t}", d, 2 * freq)));
                    }
                } else if r.theta.is_none() || r.vartheta.is_none() {
                    return Err(field("regression.theta", "gaussian designs need explicit theta and vartheta"));
                }
                if let PrivacyModel::Local { bound_b } = r.model {
                    if !(bound_b > 0.0) {
                        return Err(field("regression.model", "bound_b must be positive"));
                    }
                } else if d > 1 && self.privacy.varrho == SlackRule::Zero {
                    return Err(field("privacy.varrho", "p > 1 composes over coordinates and needs varrho > 0"));
                }
            }
            Estimator::NonparamPoint => {
                let np = self
                    .nonparam
                    .as_ref()
                    .ok_or_else(|| field("nonparam", "nonparam_point needs a nonparam block"))?;
                if !(0.0..=1.0).contains(&np.x) {
                    return Err(field("nonparam.x", "must lie in [0, 1]"));
                }
                if let Some(b) = np.bandwidth {
                    if !(b > 0.0 && b <= 1.0) {
                        return Err(field("nonparam.bandwidth", "must lie in (0, 1]"));
                    }
                }
            }
            _ => {}
        }
        Ok(())
    }

    /// `(n, T)` grid in emission order.
    pub fn grid(&self) -> Vec<(usize, usize)> {
        let mut g = Vec::with_capacity(self.data.n.len() * self.data.t.len());
        for &n in &self.data.n {
            for &t in &self.data.t {
                g.push((n, t));
            }
        }
        g
    }
}
