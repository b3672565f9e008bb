//! Per-grid-point summaries of Monte-Carlo replications.

use serde::{Deserialize, Serialize};

/// Outcome of one replication.
#[derive(Debug, Clone, PartialEq)]
pub struct Replication {
    pub estimate: Vec<f64>,
    pub sq_error: f64,
    pub histogram_failed: bool,
    /// Fraction of the clipped entries, `clipped_count / (rows · d)`.
    pub clip_fraction: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryStats {
    pub experiment_id: String,
    pub estimator: String,
    pub n: usize,
    #[serde(rename = "T")]
    pub t: usize,
    pub d: usize,
    pub epsilon: f64,
    pub delta: f64,
    pub rho_data: f64,
    pub mse: f64,
    pub median_se: f64,
    pub iqr_lo: f64,
    pub iqr_hi: f64,
    pub bias_sq: f64,
    pub variance: f64,
    pub hist_failure_rate: f64,
    pub clip_rate: f64,
    pub k: usize,
    pub base_seed: u64,
    /// Wall-clock seconds; not part of the emitted files.
    #[serde(skip)]
    pub runtime_secs: f64,
}

impl SummaryStats {
    pub fn iqr(&self) -> f64 {
        self.iqr_hi - self.iqr_lo
    }
}

/// Linearly interpolated quantile of sorted data.
pub fn quantile_sorted(sorted: &[f64], q: f64) -> f64 {
    assert!(!sorted.is_empty(), "quantile of an empty sample");
    let h = (sorted.len() - 1) as f64 * q.clamp(0.0, 1.0);
    let (lo, hi) = (h.floor() as usize, h.ceil() as usize);
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

/// Splits the mean of `errors` into squared bias and variance of the
/// estimates: `bias_sq = ‖mean(est) − truth‖²`, `variance =
/// mean(‖est − mean(est)‖²)`. Asserts `mean(errors) = bias_sq + variance`.
pub fn bias_variance_decompose(errors: &[f64], estimates: &[Vec<f64>], truth: &[f64]) -> (f64, f64) {
    let k = estimates.len();
    assert!(k >= 2, "bias-variance decomposition needs at least two replications");
    assert_eq!(errors.len(), k, "one error per estimate");
    let d = truth.len();
    let mut center = vec![0.0; d];
    for e in estimates {
        assert_eq!(e.len(), d, "estimate dimension differs from truth");
        for (c, v) in center.iter_mut().zip(e) {
            *c += v;
        }
    }
    for c in &mut center {
        *c /= k as f64;
    }
    let bias_sq: f64 = center.iter().zip(truth).map(|(c, t)| (c - t).powi(2)).sum();
    let variance = estimates
        .iter()
        .map(|e| e.iter().zip(&center).map(|(v, c)| (v - c).powi(2)).sum::<f64>())
        .sum::<f64>()
        / k as f64;
    let mse = errors.iter().sum::<f64>() / k as f64;
    let gap = (mse - bias_sq - variance).abs();
    assert!(
        gap <= 1e-9 * mse.abs().max(bias_sq + variance) + 1e-300,
        "errors are not squared distances to truth: mse {mse} vs {bias_sq} + {variance}"
    );
    (bias_sq, variance)
}

/// Aggregate statistics of one grid point. Fields describing the grid point
/// itself are filled in by the caller.
pub struct Aggregate {
    pub mse: f64,
    pub median_se: f64,
    pub iqr_lo: f64,
    pub iqr_hi: f64,
    pub bias_sq: f64,
    pub variance: f64,
    pub hist_failure_rate: f64,
    pub clip_rate: f64,
}

pub fn aggregate(reps: &[Replication], truth: &[f64]) -> Aggregate {
    let k = reps.len();
    let errors: Vec<f64> = reps.iter().map(|r| r.sq_error).collect();
    let mut sorted = errors.clone();
    sorted.sort_by(f64::total_cmp);
    let mse = errors.iter().sum::<f64>() / k as f64;
    let (bias_sq, variance) = if k >= 2 {
        let est: Vec<Vec<f64>> = reps.iter().map(|r| r.estimate.clone()).collect();
        bias_variance_decompose(&errors, &est, truth)
    } else {
        (mse, 0.0)
    };
    Aggregate {
        mse,
        median_se: quantile_sorted(&sorted, 0.5),
        iqr_lo: quantile_sorted(&sorted, 0.25),
        iqr_hi: quantile_sorted(&sorted, 0.75),
        bias_sq,
        variance,
        hist_failure_rate: reps.iter().filter(|r| r.histogram_failed).count() as f64 / k as f64,
        clip_rate: reps.iter().map(|r| r.clip_fraction).sum::<f64>() / k as f64,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::{prop_assert, proptest};

    fn sq(est: &[Vec<f64>], truth: &[f64]) -> Vec<f64> {
        est.iter().map(|e| e.iter().zip(truth).map(|(a, b)| (a - b).powi(2)).sum()).collect()
    }

    #[test]
    fn constant_estimator_has_no_variance() {
        let est = vec![vec![2.5]; 10];
        let (b, v) = bias_variance_decompose(&sq(&est, &[1.0]), &est, &[1.0]);
        assert_eq!(v, 0.0);
        assert_eq!(b, 2.25);
    }

    #[test]
    fn shift_adds_squared_bias() {
        let base: Vec<Vec<f64>> = (0..50).map(|i| vec![(i as f64 * 0.37).sin(), (i as f64).cos()]).collect();
        let truth = [0.1, -0.2];
        let (b0, v0) = bias_variance_decompose(&sq(&base, &truth), &base, &truth);
        let c = 0.75;
        let shifted: Vec<Vec<f64>> = base.iter().map(|e| vec![e[0] + c, e[1]]).collect();
        let (b1, v1) = bias_variance_decompose(&sq(&shifted, &truth), &shifted, &truth);
        assert!((v1 - v0).abs() < 1e-12);
        let mean0: f64 = base.iter().map(|e| e[0]).sum::<f64>() / 50.0;
        let expected = b0 + (mean0 + c - truth[0]).powi(2) - (mean0 - truth[0]).powi(2);
        assert!((b1 - expected).abs() < 1e-12);
    }

    #[test]
    fn symmetric_noise_has_small_bias() {
        use dpdep::mechanisms::{laplace_sample, LaplaceNoiseSpec, RngStream};
        let mut rng = RngStream::new(3, 0).rng();
        let spec = LaplaceNoiseSpec::centered(1.0).unwrap();
        let k = 20_000;
        let est: Vec<Vec<f64>> = (0..k).map(|_| vec![laplace_sample(&spec, &mut rng).unwrap()]).collect();
        let (b, v) = bias_variance_decompose(&sq(&est, &[0.0]), &est, &[0.0]);
        // sd of the sample mean is √(2/k).
        assert!(b.sqrt() <= 4.0 * (2.0 / k as f64).sqrt());
        assert!((v - 2.0).abs() < 0.1);
    }

    #[test]
    fn quantiles() {
        let s = [1.0, 2.0, 3.0, 4.0];
        assert_eq!(quantile_sorted(&s, 0.5), 2.5);
        assert_eq!(quantile_sorted(&s, 0.25), 1.75);
        assert_eq!(quantile_sorted(&[7.0], 0.75), 7.0);
    }

    proptest! {
        #[test]
        fn decomposition_identity(vals in proptest::collection::vec(-1e3f64..1e3, 4..60), t in -10.0f64..10.0) {
            let est: Vec<Vec<f64>> = vals.chunks(2).filter(|c| c.len() == 2).map(|c| c.to_vec()).collect();
            let truth = [t, -t];
            let errs = sq(&est, &truth);
            let (b, v) = bias_variance_decompose(&errs, &est, &truth);
            let mse = errs.iter().sum::<f64>() / est.len() as f64;
            prop_assert!((mse - b - v).abs() <= 1e-9 * mse.max(1e-12));
            prop_assert!(b >= 0.0 && v >= 0.0);
        }

        #[test]
        fn iqr_is_ordered(vals in proptest::collection::vec(0.0f64..100.0, 3..40)) {
            let reps: Vec<Replication> = vals
                .iter()
                .map(|&v| Replication { estimate: vec![v.sqrt()], sq_error: v, histogram_failed: false, clip_fraction: 0.0 })
                .collect();
            let a = aggregate(&reps, &[0.0]);
            prop_assert!(a.iqr_lo <= a.median_se && a.median_se <= a.iqr_hi && a.mse >= 0.0);
        }
    }
}
