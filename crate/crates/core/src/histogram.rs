//! Private histograms on the grid of bins `(2τk − τ, 2τk + τ]` and the
//! projection intervals derived from their argmax.

use std::collections::BTreeMap;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{invalid_input, invalid_param, Result};
use crate::mechanisms::{draw_laplace, keep_probability, respond};

/// Grid of right-closed bins of half-width `tau`, optionally restricted to the
/// finite index set `{k : |2τk| ≤ B}`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BinGrid {
    tau: f64,
    bound_b: Option<f64>,
}

impl BinGrid {
    pub fn new(tau: f64) -> Result<Self> {
        check_tau(tau)?;
        Ok(Self { tau, bound_b: None })
    }

    pub fn bounded(tau: f64, bound_b: f64) -> Result<Self> {
        check_tau(tau)?;
        if !(bound_b > 0.0 && bound_b.is_finite()) {
            return Err(invalid_param(format!("bound B must be positive and finite, got {bound_b}")));
        }
        Ok(Self { tau, bound_b: Some(bound_b) })
    }

    pub fn tau(&self) -> f64 {
        self.tau
    }

    pub fn bound_b(&self) -> Option<f64> {
        self.bound_b
    }

    pub fn center(&self, k: i64) -> f64 {
        2.0 * self.tau * k as f64
    }

    /// `true` iff `x ∈ (2τk − τ, 2τk + τ]`.
    pub fn contains(&self, k: i64, x: f64) -> bool {
        let c = self.center(k);
        x > c - self.tau && x <= c + self.tau
    }

    pub fn bin_index(&self, x: f64) -> Result<i64> {
        bin_index(x, self.tau)
    }

    /// Largest `k` with `|2τk| ≤ B`, when the grid is bounded.
    pub fn max_index(&self) -> Option<i64> {
        self.bound_b.map(|b| {
            let mut k = (b / (2.0 * self.tau)).floor() as i64;
            while self.center(k + 1).abs() <= b {
                k += 1;
            }
            while k > 0 && self.center(k).abs() > b {
                k -= 1;
            }
            k
        })
    }

    /// The finite index set `S`, or `None` for the unbounded grid.
    pub fn indices(&self) -> Option<std::ops::RangeInclusive<i64>> {
        self.max_index().map(|k| -k..=k)
    }
}

fn check_tau(tau: f64) -> Result<()> {
    if !(tau > 0.0 && tau.is_finite()) {
        return Err(invalid_param(format!("tau must be positive and finite, got {tau}")));
    }
    Ok(())
}

/// Index of the bin containing `x`.
pub fn bin_index(x: f64, tau: f64) -> Result<i64> {
    check_tau(tau)?;
    if !x.is_finite() {
        return Err(invalid_input(format!("cannot bin non-finite value {x}")));
    }
    let grid = BinGrid { tau, bound_b: None };
    let mut k = ((x - tau) / (2.0 * tau)).ceil() as i64;
    // Repair rounding at the bin edges.
    while x > grid.center(k) + tau {
        k += 1;
    }
    while x <= grid.center(k) - tau {
        k -= 1;
    }
    Ok(k)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum HistogramMode {
    CentralStable,
    LocalRandomized,
}

/// Released histogram. Central releases store only positive masses; local
/// releases store one (possibly negative) entry per bin of the finite grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(into = "HistogramJson", try_from = "HistogramJson")]
pub struct HistogramEstimate {
    grid: BinGrid,
    masses: BTreeMap<i64, f64>,
    mode: HistogramMode,
}

#[derive(Serialize, Deserialize)]
struct HistogramJson {
    tau: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    bound_b: Option<f64>,
    mode: HistogramMode,
    entries: Vec<(i64, f64)>,
}

impl From<HistogramEstimate> for HistogramJson {
    fn from(h: HistogramEstimate) -> Self {
        Self {
            tau: h.grid.tau,
            bound_b: h.grid.bound_b,
            mode: h.mode,
            entries: h.masses.into_iter().collect(),
        }
    }
}

impl TryFrom<HistogramJson> for HistogramEstimate {
    type Error = crate::error::DpError;

    fn try_from(j: HistogramJson) -> Result<Self> {
        let grid = match j.bound_b {
            Some(b) => BinGrid::bounded(j.tau, b)?,
            None => BinGrid::new(j.tau)?,
        };
        Ok(Self { grid, masses: j.entries.into_iter().collect(), mode: j.mode })
    }
}

impl HistogramEstimate {
    pub fn grid(&self) -> &BinGrid {
        &self.grid
    }

    pub fn mode(&self) -> HistogramMode {
        self.mode
    }

    pub fn masses(&self) -> &BTreeMap<i64, f64> {
        &self.masses
    }

    /// Released mass of bin `k` (0 for bins not stored).
    pub fn mass(&self, k: i64) -> f64 {
        self.masses.get(&k).copied().unwrap_or(0.0)
    }

    pub fn nonzero_count(&self) -> usize {
        self.masses.values().filter(|m| **m != 0.0).count()
    }

    /// Argmax of the released masses, ties going to the smallest `|k|` and
    /// then the smaller `k`. `None` when no bin has a nonzero mass stored
    /// (central) or the grid is empty.
    pub fn argmax(&self) -> Option<i64> {
        let mut best: Option<(i64, f64)> = None;
        for (&k, &m) in &self.masses {
            if self.mode == HistogramMode::CentralStable && m == 0.0 {
                continue;
            }
            best = match best {
                None => Some((k, m)),
                Some((bk, bm)) => {
                    if m > bm || (m == bm && (k.abs(), k) < (bk.abs(), bk)) {
                        Some((k, m))
                    } else {
                        Some((bk, bm))
                    }
                }
            };
        }
        best.map(|(k, _)| k)
    }
}

/// Release threshold of the stable histogram, `(2/(εn)) ln(2/δ) + 1/n`.
pub fn stable_threshold(n: usize, epsilon: f64, delta: f64) -> f64 {
    let n = n as f64;
    2.0 / (epsilon * n) * (2.0 / delta).ln() + 1.0 / n
}

/// Stable histogram: occupied bins receive `Lap(2/(εn))` noise and are zeroed
/// below the threshold; empty bins are never touched.
pub fn stable_histogram<R: Rng + ?Sized>(
    data: &[f64],
    grid: &BinGrid,
    epsilon: f64,
    delta: f64,
    rng: &mut R,
) -> Result<HistogramEstimate> {
    if data.is_empty() {
        return Err(invalid_input("stable histogram needs at least one observation"));
    }
    if grid.bound_b.is_some() {
        return Err(invalid_input("stable histogram uses the unbounded grid"));
    }
    if !(epsilon > 0.0 && epsilon.is_finite()) {
        return Err(invalid_param(format!("epsilon must be positive, got {epsilon}")));
    }
    if !(delta > 0.0 && delta < 1.0) {
        return Err(invalid_param(format!("delta must lie in (0, 1), got {delta}")));
    }
    let n = data.len();
    let mut counts: BTreeMap<i64, usize> = BTreeMap::new();
    for &x in data {
        *counts.entry(grid.bin_index(x)?).or_insert(0) += 1;
    }
    let scale = 2.0 / (epsilon * n as f64);
    let threshold = stable_threshold(n, epsilon, delta);
    let mut masses = BTreeMap::new();
    for (k, c) in counts {
        let released = draw_laplace(c as f64 / n as f64, scale, rng);
        if released >= threshold {
            masses.insert(k, released);
        }
    }
    Ok(HistogramEstimate { grid: *grid, masses, mode: HistogramMode::CentralStable })
}

/// Inverse of the randomized-response bias: `(p − (1 − π)) / (2π − 1)`.
pub fn debias(p_tilde: f64, pi: f64) -> f64 {
    (p_tilde - (1.0 - pi)) / (2.0 * pi - 1.0)
}

/// Local histogram: every datum answers one randomized-response query per bin
/// of the finite grid at `ε/2`; per-bin averages are debiased.
pub fn randomized_histogram<R: Rng + ?Sized>(
    data: &[f64],
    grid: &BinGrid,
    epsilon: f64,
    rng: &mut R,
) -> Result<HistogramEstimate> {
    let range = grid
        .indices()
        .ok_or_else(|| invalid_input("randomized histogram needs a bounded grid"))?;
    if data.is_empty() {
        return Err(invalid_input("randomized histogram needs at least one observation"));
    }
    if !(epsilon > 0.0) {
        return Err(invalid_param(format!("epsilon must be positive, got {epsilon}")));
    }
    let own: Vec<i64> = data.iter().map(|&x| grid.bin_index(x)).collect::<Result<_>>()?;
    let pi = keep_probability(epsilon / 2.0);
    let n = data.len() as f64;
    let mut masses = BTreeMap::new();
    for k in range {
        let reported = own.iter().filter(|&&b| respond(b == k, pi, rng)).count();
        masses.insert(k, debias(reported as f64 / n, pi));
    }
    Ok(HistogramEstimate { grid: *grid, masses, mode: HistogramMode::LocalRandomized })
}

/// Bin geometry and returned radius of the central projection interval.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum IntervalMode {
    /// Bins of half-width `τ`, radius `3τ`.
    #[default]
    Default,
    /// Bins of half-width `τ′`, radius `τ + 2τ′`.
    Tightened { tau_prime: f64 },
    /// Arbitrary bin half-width and radius.
    Custom { bin_half_width: f64, radius: f64 },
}

impl IntervalMode {
    /// `(bin half-width, radius)` for concentration radius `tau`.
    pub fn geometry(&self, tau: f64) -> Result<(f64, f64)> {
        let (w, r) = match *self {
            IntervalMode::Default => (tau, 3.0 * tau),
            IntervalMode::Tightened { tau_prime } => (tau_prime, tau + 2.0 * tau_prime),
            IntervalMode::Custom { bin_half_width, radius } => (bin_half_width, radius),
        };
        if !(w > 0.0 && w.is_finite() && r > 0.0 && r.is_finite()) {
            return Err(invalid_param(format!("interval geometry must be positive, got ({w}, {r})")));
        }
        Ok((w, r))
    }
}

/// Clipping interval `[m̂ − R, m̂ + R]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ProjectionInterval {
    pub midpoint: f64,
    pub radius: f64,
    pub histogram_failed: bool,
}

impl ProjectionInterval {
    pub fn new(midpoint: f64, radius: f64) -> Result<Self> {
        if !(radius > 0.0 && radius.is_finite() && midpoint.is_finite()) {
            return Err(invalid_param(format!("invalid interval ({midpoint}, {radius})")));
        }
        Ok(Self { midpoint, radius, histogram_failed: false })
    }

    pub fn lo(&self) -> f64 {
        self.midpoint - self.radius
    }

    pub fn hi(&self) -> f64 {
        self.midpoint + self.radius
    }

    pub fn contains(&self, x: f64) -> bool {
        x >= self.lo() && x <= self.hi()
    }

    pub fn project(&self, x: f64) -> f64 {
        x.clamp(self.lo(), self.hi())
    }
}

/// Central projection interval from the stable histogram.
pub fn projection_interval_central<R: Rng + ?Sized>(
    data: &[f64],
    tau: f64,
    epsilon: f64,
    delta: f64,
    rng: &mut R,
    mode: IntervalMode,
) -> Result<ProjectionInterval> {
    check_tau(tau)?;
    let (width, radius) = mode.geometry(tau)?;
    let grid = BinGrid::new(width)?;
    let hist = stable_histogram(data, &grid, epsilon, delta, rng)?;
    Ok(match hist.argmax() {
        Some(k) => ProjectionInterval { midpoint: grid.center(k), radius, histogram_failed: false },
        None => ProjectionInterval { midpoint: 0.0, radius, histogram_failed: true },
    })
}

/// Local projection interval from the randomized histogram at `ε/2` over the
/// bins centred in `[−B, B]`.
pub fn projection_interval_local<R: Rng + ?Sized>(
    data: &[f64],
    tau: f64,
    epsilon: f64,
    bound_b: f64,
    rng: &mut R,
) -> Result<ProjectionInterval> {
    check_tau(tau)?;
    if !(bound_b >= tau) {
        return Err(invalid_param(format!("bound B = {bound_b} must be at least tau = {tau}")));
    }
    let grid = BinGrid::bounded(tau, bound_b)?;
    let hist = randomized_histogram(data, &grid, epsilon / 2.0, rng)?;
    let k = hist.argmax().expect("bounded grid always has bin 0");
    Ok(ProjectionInterval { midpoint: grid.center(k), radius: 3.0 * tau, histogram_failed: false })
}
