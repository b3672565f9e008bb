use dpdep::mean::{concentration_radius, ConcentrationSpec};
use dpdep_harness::config::{ConfigFormat, ExperimentConfig};
use dpdep_harness::emit::{emit_results, read_results, Format};
use dpdep_harness::runner::{run_experiment, RunOptions};
use dpdep_harness::stats::SummaryStats;

fn config(estimator: &str, covariance: &str, n: &str, epsilon: &str, k: usize) -> ExperimentConfig {
    let text = format!(
        r#"
experiment_id = "it"
estimator = "{estimator}"
replications = {k}
base_seed = 31

[data]
mean = 0.0
n = {n}
covariance = {covariance}

[privacy]
epsilon = {epsilon}
"#
    );
    ExperimentConfig::from_str_as(&text, ConfigFormat::Toml).unwrap()
}

fn run(cfg: &ExperimentConfig) -> Vec<SummaryStats> {
    run_experiment(cfg, RunOptions::default()).unwrap()
}

const IDENTITY: &str = r#"{ kind = "identity" }"#;
const EPS_ONE: &str = r#"{ rule = "constant", value = 1.0 }"#;

#[test]
fn nonprivate_mean_variance_is_one_over_n() {
    let s = &run(&config("nonprivate_mean", IDENTITY, "[1000]", EPS_ONE, 2000))[0];
    let scaled = s.mse * 1000.0;
    assert!((0.8..=1.2).contains(&scaled), "MSE·n = {scaled}");
    assert_eq!(s.hist_failure_rate, 0.0);
}

#[test]
fn nonprivate_mean_respects_operator_norm_bound() {
    for cov in [
        IDENTITY,
        r#"{ kind = "toeplitz", decay = 0.5 }"#,
        r#"{ kind = "toeplitz", decay = 0.95 }"#,
        r#"{ kind = "equicorrelated", variance = 1.0, covariance = 0.25 }"#,
        r#"{ kind = "equicorrelated", variance = 2.0, covariance = 1.0, rule = "over_dim_minus_one" }"#,
    ] {
        let s = &run(&config("nonprivate_mean", cov, "[1000]", EPS_ONE, 2000))[0];
        assert!(s.mse * 1000.0 <= 1.3 * s.rho_data, "{cov}: MSE·n = {} vs ρ = {}", s.mse * 1000.0, s.rho_data);
    }
}

/// With ε = 1/√n the Laplace term `2 (12τ/(nε))²` equals `288τ²/n`, so
/// `n · MSE ≈ 1 + 288τ²` when the projection interval covers the data.
#[test]
fn central_one_over_sqrt_n_matches_noise_oracle() {
    let rows = run(&config("central_1d", IDENTITY, "[1000, 10000]", r#"{ rule = "over_sqrt_n", c = 1.0 }"#, 2000));
    for s in &rows {
        let tau = concentration_radius(&ConcentrationSpec::new(1.0, 0.1), s.n, 1, 1).unwrap();
        let predicted = 1.0 + 288.0 * tau * tau;
        let scaled = s.mse * s.n as f64;
        assert!((scaled / predicted - 1.0).abs() <= 0.2, "n = {}: n·MSE {scaled} vs {predicted}", s.n);
        assert_eq!(s.clip_rate, 0.0);
    }
}

#[test]
fn strong_dependence_floor_at_one_quarter() {
    let cov = r#"{ kind = "equicorrelated", variance = 1.0, covariance = 0.25 }"#;
    let s = &run(&config("central_1d", cov, "[50000]", EPS_ONE, 1000))[0];
    assert!((0.22..=0.28).contains(&s.mse), "MSE {}", s.mse);
}

#[test]
fn decomposition_holds_per_grid_point() {
    let rows = run(&config("central_1d", IDENTITY, "[500, 2000]", r#"{ rule = "constant", value = 0.5 }"#, 300));
    for s in rows {
        assert!((s.mse - s.bias_sq - s.variance).abs() <= 1e-9 * s.mse);
        assert!(s.iqr_lo <= s.median_se && s.median_se <= s.iqr_hi);
    }
}

#[test]
fn results_survive_json_round_trip() {
    let rows = run(&config("central_1d", IDENTITY, "[300, 600]", EPS_ONE, 20));
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("r.json");
    emit_results(&rows, &path, Format::Json).unwrap();
    let back = read_results(&std::fs::read_to_string(&path).unwrap(), Format::Json).unwrap();
    let strip = |v: &[SummaryStats]| v.iter().map(|s| SummaryStats { runtime_secs: 0.0, ..s.clone() }).collect::<Vec<_>>();
    assert_eq!(back, strip(&rows));
}

#[test]
fn parallel_and_serial_runs_agree() {
    let cfg = config("central_1d", r#"{ kind = "toeplitz", decay = 0.8 }"#, "[400, 800]", EPS_ONE, 64);
    let strip = |v: Vec<SummaryStats>| v.into_iter().map(|s| SummaryStats { runtime_secs: 0.0, ..s }).collect::<Vec<_>>();
    let one = strip(run_experiment(&cfg, RunOptions { threads: Some(1), seed_override: None }).unwrap());
    let many = strip(run_experiment(&cfg, RunOptions { threads: Some(8), seed_override: None }).unwrap());
    assert_eq!(one, many);
}

fn toml(body: &str) -> ExperimentConfig {
    ExperimentConfig::from_str_as(body, ConfigFormat::Toml).unwrap()
}

#[test]
fn every_estimator_runs() {
    let base = |est: &str, extra: &str, d: usize, t: &str, varrho: bool| {
        format!(
            "estimator = \"{est}\"\nreplications = 4\nbase_seed = 3\n{extra}\n[data]\nmean = 1.0\nn = [200]\nT = {t}\nd = {d}\n\n[privacy]\nepsilon = {{ rule = \"constant\", value = 0.5 }}\n{}",
            if varrho { "varrho = { rule = \"constant\", value = 0.01 }\n" } else { "" }
        )
    };
    let cases = [
        base("nonprivate_mean", "", 2, "[1]", false),
        base("central_1d", "", 1, "[1]", false),
        base("central_hd", "", 3, "[1]", true),
        base("local_1d", "bound_b = 10.0", 1, "[1]", false),
        base("local_hd", "bound_b = 10.0", 2, "[1]", true),
        base("user_level_central", "", 1, "[5]", false),
        base("user_level_local", "bound_b = 10.0", 2, "[5]", true),
        base("split", "", 2, "[1]", true),
        base("random_effects", "[random_effects]\nsigma_u2 = 0.01\ngroup_size = 20\n", 1, "[4]", false),
        base("longitudinal_regression", "[regression]\nbeta = [1.0, -1.0]\n", 2, "[6]", true),
        base("nonparam_point", "[nonparam]\nx = 0.5\nfunction = { kind = \"linear\" }\nbandwidth = 0.1\n", 1, "[1]", false),
        base("plugin_bisection", "[variance]\nm_hat = 3.0\nsigma2_min = 0.1\nsigma2_max = 100.0\n", 1, "[1]", true),
        base("plugin_coinpress", "[variance]\nm_hat = 3.0\nsigma2_min = 0.1\nsigma2_max = 100.0\n", 1, "[1]", true),
    ];
    for text in cases {
        let cfg = toml(&text);
        let rows = run(&cfg);
        assert_eq!(rows.len(), 1, "{text}");
        let s = &rows[0];
        assert_eq!(s.estimator, cfg.estimator.name());
        assert!(s.mse.is_finite() && s.mse >= 0.0, "{}: {}", s.estimator, s.mse);
        assert_eq!(s.k, 4);
    }
}
