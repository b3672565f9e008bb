//! Randomization primitives and privacy-budget algebra.
//!
//! Every estimator in the crate draws its noise through the functions in this
//! module: inverse-CDF Laplace sampling, the vector Laplace mechanism,
//! binary randomized response, and the basic/advanced composition rules used
//! to split a budget over `d` coordinates.

use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha12Rng;
use serde::{Deserialize, Serialize};

use crate::error::{invalid_param, Result};

/// Generator used by all estimators. Counter-based, so `(seed, stream)` pairs
/// give reproducible and independent sequences.
pub type DpRng = ChaCha12Rng;

/// Identifies one reproducible random sequence.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct RngStream {
    pub seed: u64,
    pub stream: u64,
}

impl RngStream {
    pub fn new(seed: u64, stream: u64) -> Self {
        Self { seed, stream }
    }

    /// Fresh generator positioned at the start of this stream.
    pub fn rng(&self) -> DpRng {
        let mut rng = ChaCha12Rng::seed_from_u64(self.seed);
        rng.set_stream(self.stream);
        rng
    }

    /// Stream for a sub-task (e.g. one column) derived from this one.
    pub fn derive(&self, index: u64) -> Self {
        Self {
            seed: splitmix64(self.seed ^ splitmix64(self.stream.wrapping_add(0x51_7C_C1_B7))),
            stream: index,
        }
    }
}

pub(crate) fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    x = (x ^ (x >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    x ^ (x >> 31)
}

/// `(ε, δ, ϱ)`: pure privacy loss, additive slack and the extra slack paid by
/// advanced composition.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PrivacyBudget {
    epsilon: f64,
    delta: f64,
    varrho: f64,
}

impl PrivacyBudget {
    pub fn new(epsilon: f64, delta: f64, varrho: f64) -> Result<Self> {
        if !(epsilon.is_finite() && epsilon > 0.0) {
            return Err(invalid_param(format!("epsilon must be positive and finite, got {epsilon}")));
        }
        if !(0.0..1.0).contains(&delta) {
            return Err(invalid_param(format!("delta must lie in [0, 1), got {delta}")));
        }
        if !(0.0..1.0).contains(&varrho) {
            return Err(invalid_param(format!("varrho must lie in [0, 1), got {varrho}")));
        }
        Ok(Self { epsilon, delta, varrho })
    }

    /// Pure `(ε, 0, 0)` budget.
    pub fn pure(epsilon: f64) -> Result<Self> {
        Self::new(epsilon, 0.0, 0.0)
    }

    pub fn epsilon(&self) -> f64 {
        self.epsilon
    }

    pub fn delta(&self) -> f64 {
        self.delta
    }

    pub fn varrho(&self) -> f64 {
        self.varrho
    }

    /// Additive slack of the overall guarantee, `δ + ϱ`.
    pub fn total_delta(&self) -> f64 {
        self.delta + self.varrho
    }

    /// Checks `ε ∈ (0, 1]` and `δ, ϱ ∈ (0, 1)`, as required by the composed
    /// central estimators.
    pub fn require_central_range(&self, what: &str) -> Result<()> {
        let inside = |v: f64| v > 0.0 && v < 1.0;
        if !(self.epsilon > 0.0 && self.epsilon <= 1.0) || !inside(self.delta) || !inside(self.varrho) {
            return Err(invalid_param(format!(
                "{what} requires epsilon in (0, 1] and delta, varrho in (0, 1); got ({}, {}, {})",
                self.epsilon, self.delta, self.varrho
            )));
        }
        Ok(())
    }
}

/// Laplace law with a given location and scale.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LaplaceNoiseSpec {
    pub location: f64,
    pub scale: f64,
}

impl LaplaceNoiseSpec {
    pub fn new(location: f64, scale: f64) -> Result<Self> {
        if !(scale > 0.0 && scale.is_finite()) {
            return Err(invalid_param(format!("Laplace scale must be positive, got {scale}")));
        }
        Ok(Self { location, scale })
    }

    pub fn centered(scale: f64) -> Result<Self> {
        Self::new(0.0, scale)
    }

    pub fn variance(&self) -> f64 {
        2.0 * self.scale * self.scale
    }
}

/// Uniform draw on the open interval (0, 1) from 53 random bits.
fn open_unit<R: RngCore + ?Sized>(rng: &mut R) -> f64 {
    ((rng.next_u64() >> 11) as f64 + 0.5) * (1.0 / (1u64 << 53) as f64)
}

/// One Laplace draw by inversion: `U ~ Unif(-1/2, 1/2)`,
/// `X = loc - b sgn(U) ln(1 - 2|U|)`.
pub fn laplace_sample<R: RngCore + ?Sized>(spec: &LaplaceNoiseSpec, rng: &mut R) -> Result<f64> {
    if !(spec.scale > 0.0 && spec.scale.is_finite()) {
        return Err(invalid_param(format!("Laplace scale must be positive, got {}", spec.scale)));
    }
    Ok(draw_laplace(spec.location, spec.scale, rng))
}

/// Unchecked centred draw; callers guarantee `scale > 0`.
pub(crate) fn draw_laplace<R: RngCore + ?Sized>(location: f64, scale: f64, rng: &mut R) -> f64 {
    let u = open_unit(rng) - 0.5;
    location - scale * u.signum() * (1.0 - 2.0 * u.abs()).ln()
}

/// Adds independent `Lap(0, Δ/ε)` noise to every coordinate.
pub fn laplace_mechanism<R: RngCore + ?Sized>(
    values: &[f64],
    l1_sensitivity: f64,
    epsilon: f64,
    rng: &mut R,
) -> Result<Vec<f64>> {
    if !(l1_sensitivity > 0.0 && l1_sensitivity.is_finite()) {
        return Err(invalid_param(format!("sensitivity must be positive, got {l1_sensitivity}")));
    }
    if !(epsilon > 0.0) {
        return Err(invalid_param(format!("epsilon must be positive, got {epsilon}")));
    }
    let scale = l1_sensitivity / epsilon;
    Ok(values.iter().map(|&v| draw_laplace(v, scale, rng)).collect())
}

/// Keep probability `e^ε / (1 + e^ε)` of binary randomized response.
pub fn keep_probability(epsilon: f64) -> f64 {
    1.0 / (1.0 + (-epsilon).exp())
}

/// Reports `bit` with probability `π = e^ε/(1+e^ε)` and the flipped bit
/// otherwise. Returns the reported bit together with `π`.
pub fn randomized_response<R: Rng + ?Sized>(bit: bool, epsilon: f64, rng: &mut R) -> Result<(bool, f64)> {
    if !(epsilon > 0.0) {
        return Err(invalid_param(format!("epsilon must be positive, got {epsilon}")));
    }
    let pi = keep_probability(epsilon);
    Ok((respond(bit, pi, rng), pi))
}

#[inline]
pub(crate) fn respond<R: Rng + ?Sized>(bit: bool, pi: f64, rng: &mut R) -> bool {
    let u: f64 = rng.random();
    if u <= pi {
        bit
    } else {
        !bit
    }
}

/// Per-mechanism budget `(ε/d, δ/d, 0)` for basic composition of `d`
/// mechanisms.
pub fn compose_basic(d: usize, budget: &PrivacyBudget) -> Result<PrivacyBudget> {
    if d == 0 {
        return Err(invalid_param("composition count d must be at least 1"));
    }
    let d = d as f64;
    PrivacyBudget::new(budget.epsilon / d, budget.delta / d, 0.0)
}

/// Per-mechanism budget `(ε/√(8d ln(1/ϱ)), δ/d, ϱ)` for advanced composition.
/// The composed mechanism is `(ε, δ + ϱ)`-DP.
pub fn compose_advanced(d: usize, budget: &PrivacyBudget) -> Result<PrivacyBudget> {
    if d == 0 {
        return Err(invalid_param("composition count d must be at least 1"));
    }
    let varrho = budget.varrho;
    if !(varrho > 0.0 && varrho < 1.0) {
        return Err(invalid_param(format!("advanced composition needs varrho in (0, 1), got {varrho}")));
    }
    let factor = (8.0 * d as f64 * (1.0 / varrho).ln()).sqrt();
    PrivacyBudget::new(budget.epsilon / factor, budget.delta / d as f64, varrho)
}

/// Total guarantee of `d` mechanisms run at `per_mechanism` under advanced
/// composition; inverse of [`compose_advanced`].
pub fn advanced_total(d: usize, per_mechanism: &PrivacyBudget) -> Result<PrivacyBudget> {
    let varrho = per_mechanism.varrho;
    if d == 0 || !(varrho > 0.0 && varrho < 1.0) {
        return Err(invalid_param("advanced_total needs d >= 1 and varrho in (0, 1)"));
    }
    let factor = (8.0 * d as f64 * (1.0 / varrho).ln()).sqrt();
    PrivacyBudget::new(per_mechanism.epsilon * factor, per_mechanism.delta * d as f64, varrho)
}
