#![allow(dead_code)]

use dpdep::mechanisms::{laplace_sample, LaplaceNoiseSpec, RngStream};
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

pub fn normals(n: usize, mu: f64, sd: f64, rng: &mut impl Rng) -> Vec<f64> {
    (0..n)
        .map(|_| {
            let z: f64 = StandardNormal.sample(rng);
            mu + sd * z
        })
        .collect()
}

pub fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

/// Probability that `‖L + s·Z‖₂ ≤ limit` for `dims` i.i.d. coordinates with
/// `L ~ Lap(b)` and `Z ~ N(0, 1)`, by direct simulation of the two laws.
pub fn oracle_rate(dims: usize, laplace_scale: f64, sampling_sd: f64, limit: f64) -> f64 {
    let mut rng = RngStream::new(424_242, 0).rng();
    let draws = 200_000;
    let hits = (0..draws)
        .filter(|_| {
            let norm2: f64 = (0..dims)
                .map(|_| {
                    let z: f64 = StandardNormal.sample(&mut rng);
                    let l = if laplace_scale > 0.0 {
                        laplace_sample(&LaplaceNoiseSpec::centered(laplace_scale).unwrap(), &mut rng).unwrap()
                    } else {
                        0.0
                    };
                    let e = l + sampling_sd * z;
                    e * e
                })
                .sum();
            norm2.sqrt() <= limit
        })
        .count();
    hits as f64 / draws as f64
}

/// Four-sigma binomial band around `p` for `runs` trials.
pub fn binomial_band(p: f64, runs: usize) -> f64 {
    4.0 * (p * (1.0 - p) / runs as f64).sqrt() + 0.01
}

/// Least-squares slope of `ln y` against `ln x`.
pub fn loglog_slope(x: &[f64], y: &[f64]) -> f64 {
    let lx: Vec<f64> = x.iter().map(|v| v.ln()).collect();
    let ly: Vec<f64> = y.iter().map(|v| v.ln()).collect();
    let (mx, my) = (mean(&lx), mean(&ly));
    let num: f64 = lx.iter().zip(&ly).map(|(a, b)| (a - mx) * (b - my)).sum();
    let den: f64 = lx.iter().map(|a| (a - mx).powi(2)).sum();
    num / den
}
