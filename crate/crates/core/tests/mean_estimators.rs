mod common;

use common::normals;
use dpdep::histogram::IntervalMode;
use dpdep::mean::{
    winsorized_mean_1d_central, winsorized_mean_hd_central, winsorized_mean_hd_local, winsorized_mean_split,
};
use dpdep::mechanisms::{PrivacyBudget, RngStream};
use nalgebra::DMatrix;

fn gaussian_matrix(n: usize, mu: &[f64], rng: &mut impl rand::Rng) -> DMatrix<f64> {
    let cols: Vec<Vec<f64>> = mu.iter().map(|&m| normals(n, m, 1.0, rng)).collect();
    DMatrix::from_fn(n, mu.len(), |i, j| cols[j][i])
}

fn sq_err(v: &[f64], mu: &[f64]) -> f64 {
    v.iter().zip(mu).map(|(a, b)| (a - b).powi(2)).sum()
}

#[test]
fn split_estimator_is_competitive() {
    let n = 10_000usize;
    let mu = [3.0, -1.0];
    let tau = (4.0 * n as f64).ln().sqrt();
    let budget = PrivacyBudget::new(1.0, 1e-8, 1e-8).unwrap();
    let mut rng = RngStream::new(31, 0).rng();
    let runs = 500;
    let (mut split, mut plain) = (0.0, 0.0);
    for _ in 0..runs {
        let z = gaussian_matrix(n, &mu, &mut rng);
        let x = gaussian_matrix(n, &mu, &mut rng);
        split += sq_err(&winsorized_mean_split(&z, &x, tau, &budget, &mut rng).unwrap().value, &mu);
        plain += sq_err(&winsorized_mean_hd_central(&x, tau, &budget, &mut rng, IntervalMode::Default).unwrap().value, &mu);
    }
    assert!(split <= 3.0 * plain && plain <= 3.0 * split, "split {split} plain {plain}");
}

#[test]
fn mse_is_monotone_in_epsilon() {
    let n = 1000usize;
    let data = normals(n, 0.0, 1.0, &mut RngStream::new(32, 0).rng());
    let tau = (2.0 * (2.0 * n as f64 / 0.1).ln()).sqrt();
    let mses: Vec<f64> = [0.1, 0.5, 1.0]
        .iter()
        .map(|&eps| {
            let b = PrivacyBudget::new(eps, 1e-6, 0.0).unwrap();
            (0..200u64)
                .map(|r| {
                    let est = winsorized_mean_1d_central(&data, tau, &b, &mut RngStream::new(33, r).rng(), IntervalMode::Default)
                        .unwrap();
                    est.value[0].powi(2)
                })
                .sum::<f64>()
                / 200.0
        })
        .collect();
    assert!(mses[0] >= mses[1] && mses[1] >= mses[2], "{mses:?}");
}

#[test]
fn budget_accounting_is_reconstructed() {
    let mut rng = RngStream::new(34, 0).rng();
    let x = gaussian_matrix(500, &[0.0, 1.0, 2.0], &mut rng);
    let b = PrivacyBudget::new(0.9, 1e-5, 1e-4).unwrap();
    let c = winsorized_mean_hd_central(&x, 3.0, &b, &mut rng, IntervalMode::Default).unwrap();
    assert!((c.budget_spent.epsilon() - 0.9).abs() < 1e-12);
    assert!((c.budget_spent.total_delta() - (1e-5 + 1e-4)).abs() < 1e-15);
    let s = winsorized_mean_split(&x, &x, 3.0, &b, &mut rng).unwrap();
    assert_eq!(s.budget_spent, c.budget_spent);
    let l = winsorized_mean_hd_local(&x, 3.0, 0.9, 1e-4, 10.0, &mut rng).unwrap();
    assert!((l.budget_spent.epsilon() - 0.9).abs() < 1e-12);
    assert!((l.budget_spent.total_delta() - 1e-4).abs() < 1e-15);
}

#[test]
fn pre_noise_stays_inside_intervals() {
    let mut rng = RngStream::new(35, 0).rng();
    for r in 0..50 {
        let x = gaussian_matrix(300, &[r as f64, -(r as f64)], &mut rng);
        let b = PrivacyBudget::new(0.3, 1e-4, 1e-3).unwrap();
        let est = winsorized_mean_hd_central(&x, 1.0, &b, &mut rng, IntervalMode::Default).unwrap();
        for j in 0..2 {
            let iv = &est.interval_per_dim[j];
            assert!((est.value[j] - est.noise[j] - iv.midpoint).abs() <= iv.radius + 1e-9);
        }
    }
}
