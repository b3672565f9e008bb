mod common;

use dpdep::mechanisms::RngStream;
use dpdep::nonparam::{priestley_chao, write_curve_csv, CurvePoint, KernelSpec};
use dpdep::synth::{log_sobolev_constant, sample_fixed_design, CovarianceSpec};

#[test]
fn correlated_noise_variance_bound() {
    let (n, b) = (2000usize, 0.1);
    let spec = CovarianceSpec::toeplitz(0.9, n);
    let sigma2_max = log_sobolev_constant(&spec).unwrap().rho;
    let k = KernelSpec::gaussian();
    let f = |x: f64| (2.0 * std::f64::consts::PI * x).sin();
    let mut rng = RngStream::new(21, 0).rng();
    let points = [0.3, 0.5, 0.7];
    let draws = 10_000;
    let mut sums = [0.0; 3];
    let mut sq = [0.0; 3];
    for _ in 0..draws {
        let d = sample_fixed_design(&f, n, &spec, &mut rng).unwrap();
        for (j, &x) in points.iter().enumerate() {
            let v = priestley_chao(&d, &k, b, x).unwrap();
            sums[j] += v;
            sq[j] += v * v;
        }
    }
    let bound = sigma2_max * k.sup_norm / (n as f64 * b) * 1.5;
    for j in 0..3 {
        let m = sums[j] / draws as f64;
        let var = sq[j] / draws as f64 - m * m;
        assert!(var <= bound, "x = {}: variance {var} above {bound}", points[j]);
        assert!(var > 0.0);
    }
}

#[test]
fn curve_csv_layout() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("curve.csv");
    let pts = [
        CurvePoint { x: 0.5, estimate: 1.25, interval_lo: -1.0, interval_hi: 3.0, clipped_count: 2 },
        CurvePoint { x: 0.6, estimate: 0.5, interval_lo: -2.0, interval_hi: 2.0, clipped_count: 0 },
    ];
    write_curve_csv(&path, &pts).unwrap();
    let text = std::fs::read_to_string(&path).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("x,estimate,interval_lo,interval_hi,clipped_count"));
    assert_eq!(lines.next(), Some("0.5,1.25,-1.0,3.0,2"));
    assert_eq!(lines.count(), 1);
}
