mod common;

use common::mean;
use dpdep::histogram::IntervalMode;
use dpdep::mean::{concentration_radius, winsorized_mean_1d_central, winsorized_mean_1d_local, ConcentrationSpec};
use dpdep::mechanisms::{PrivacyBudget, RngStream};
use dpdep::synth::{sample_gaussian, sample_random_effects, CovarianceSpec};
use dpdep::user_level::{
    load_group_labels, random_effects_location, random_effects_rho, user_averages, user_level_mean_central,
    user_level_mean_local, PrivacyModel, UserDataMatrix,
};

fn iid_users(n: usize, t: usize, seed: u64) -> UserDataMatrix {
    let mut rng = RngStream::new(seed, 0).rng();
    let v = common::normals(n * t, 1.0, 1.0, &mut rng);
    UserDataMatrix::from_values(n, t, &v).unwrap()
}

#[test]
fn t_equal_one_reduces_to_item_level() {
    let x = iid_users(2000, 1, 5);
    let items: Vec<f64> = x.data().column(0).iter().copied().collect();
    let spec = ConcentrationSpec::new(1.0, 0.1);
    let tau = concentration_radius(&spec, 2000, 1, 1).unwrap();

    let b = PrivacyBudget::new(0.5, 1e-6, 0.0).unwrap();
    let user = user_level_mean_central(&x, &spec, &b, &mut RngStream::new(9, 4).rng()).unwrap();
    let item = winsorized_mean_1d_central(&items, tau, &b, &mut RngStream::new(9, 4).rng(), IntervalMode::Default).unwrap();
    assert_eq!(user, item);

    let user = user_level_mean_local(&x, &spec, 0.5, 0.0, 10.0, &mut RngStream::new(9, 5).rng()).unwrap();
    let item = winsorized_mean_1d_local(&items, tau, 0.5, 10.0, &mut RngStream::new(9, 5).rng()).unwrap();
    assert_eq!(user, item);
}

#[test]
fn local_user_level_budget_split() {
    let mut rng = RngStream::new(6, 0).rng();
    let v = common::normals(500 * 4 * 2, 0.0, 1.0, &mut rng);
    let m = nalgebra::DMatrix::from_column_slice(500 * 4, 2, &v);
    let x = UserDataMatrix::new(500, 4, m).unwrap();
    let varrho = 0.05;
    let est = user_level_mean_local(&x, &ConcentrationSpec::new(1.0, 0.1), 0.8, varrho, 10.0, &mut rng).unwrap();
    assert!((est.budget_spent.epsilon() - 0.8).abs() < 1e-12);
    assert!((est.budget_spent.total_delta() - varrho).abs() < 1e-15);
    assert_eq!(est.dim(), 2);
}

#[test]
fn local_user_level_error_exceeds_central() {
    let spec = ConcentrationSpec::new(1.0, 0.1);
    let b = PrivacyBudget::new(1.0, 1e-6, 0.0).unwrap();
    let runs = 200;
    let (mut central, mut local) = (0.0, 0.0);
    for r in 0..runs {
        let x = iid_users(1000, 5, 100 + r);
        let c = user_level_mean_central(&x, &spec, &b, &mut RngStream::new(7, r).rng()).unwrap();
        let l = user_level_mean_local(&x, &spec, 1.0, 0.0, 10.0, &mut RngStream::new(7, r).rng()).unwrap();
        central += (c.value[0] - 1.0).powi(2);
        local += (l.value[0] - 1.0).powi(2);
    }
    assert!(local > 10.0 * central, "local {local} central {central}");
}

#[test]
fn zero_group_variance_is_plain_user_level() {
    let (groups, t) = (vec![30usize, 20, 50], 6usize);
    let per_user = CovarianceSpec::toeplitz(0.5, t);
    let spec = ConcentrationSpec::new(3.0, 0.1);
    let b = PrivacyBudget::new(1.0, 1e-6, 0.0).unwrap();
    let (y, labels) = sample_random_effects(2.0, 0.0, &groups, t, &per_user, &mut RngStream::new(8, 0).rng()).unwrap();

    let mut rng = RngStream::new(8, 0).rng();
    let mut plain = Vec::new();
    for _ in 0..100 {
        plain.extend(sample_gaussian(&vec![2.0; t], &per_user, &mut rng).unwrap());
    }
    let plain = UserDataMatrix::from_values(100, t, &plain).unwrap();
    assert_eq!(y, plain);

    let a = random_effects_location(&y, &labels, &spec, &b, &mut RngStream::new(3, 3).rng(), PrivacyModel::Central).unwrap();
    let c = user_level_mean_central(&plain, &spec, &b, &mut RngStream::new(3, 3).rng()).unwrap();
    assert_eq!(a, c);
}

#[test]
fn single_group_has_a_nonvanishing_floor() {
    let (n, t, s2u) = (1000usize, 10usize, 0.04);
    let mut rng = RngStream::new(10, 0).rng();
    let k = 2000;
    let mse = (0..k)
        .map(|_| {
            let (y, _) = sample_random_effects(0.0, s2u, &[n], t, &CovarianceSpec::identity(t), &mut rng).unwrap();
            mean(y.data().as_slice()).powi(2)
        })
        .sum::<f64>()
        / k as f64;
    assert!(mse >= 0.9 * s2u, "mse {mse}");
    assert!((random_effects_rho(0.01, &[10, 3], 10, 1.0) - 2.0).abs() < 1e-12);
}

#[test]
fn grand_mean_identity_on_random_effects_data() {
    let (y, _) = sample_random_effects(1.0, 0.5, &[4, 4], 8, &CovarianceSpec::identity(8), &mut RngStream::new(11, 0).rng())
        .unwrap();
    let avgs = user_averages(&y);
    let a = mean(avgs.as_slice());
    let g = mean(y.data().as_slice());
    assert!((a - g).abs() <= 4.0 * f64::EPSILON * g.abs().max(1.0));
}

#[test]
fn group_labels_from_csv() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("groups.csv");
    std::fs::write(&path, "user_id,group_id\nu1,north\nu2,south\nu3,north\n").unwrap();
    let ids: Vec<String> = ["u3", "u2", "u1"].iter().map(|s| s.to_string()).collect();
    assert_eq!(load_group_labels(&path, &ids).unwrap(), vec![0, 1, 0]);
    let missing = vec!["u9".to_string()];
    assert!(load_group_labels(&path, &missing).unwrap_err().to_string().contains("u9"));
}
