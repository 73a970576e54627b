use statrs::function::erf::erfc;

use crate::error::{Error, Result};

/// Smallest probability assigned to any in-support index.
pub const PMF_FLOOR: f64 = 1.0 / 4_294_967_296.0;
/// Mass reserved for indices outside the support.
pub const P_ESCAPE: f64 = 1.0 / 1_048_576.0;
/// Half-width of the support in standard deviations.
pub const TAIL_SIGMAS: f64 = 8.0;

/// Distribution of a quantizer index given the dither, under a zero-mean
/// Gaussian model for the quantizer input.
#[derive(Clone, Debug, PartialEq)]
pub struct ConditionalPmf {
    pub i_min: i64,
    /// Probabilities of `i_min, i_min + 1, …`; they sum to `1 − p_escape`.
    pub probs: Vec<f64>,
    pub p_escape: f64,
}

impl ConditionalPmf {
    pub fn i_max(&self) -> i64 {
        self.i_min + self.probs.len() as i64 - 1
    }

    pub fn prob(&self, j: i64) -> Option<f64> {
        if j < self.i_min || j > self.i_max() {
            return None;
        }
        Some(self.probs[(j - self.i_min) as usize])
    }

    /// Most likely index (the smallest one on ties).
    pub fn mode(&self) -> i64 {
        let mut best = 0;
        for (k, p) in self.probs.iter().enumerate() {
            if *p > self.probs[best] {
                best = k;
            }
        }
        self.i_min + best as i64
    }

    pub fn max_prob(&self) -> f64 {
        self.probs.iter().cloned().fold(0.0, f64::max)
    }
}

/// `P(a ≤ Z < b)` for standard normal `Z`, evaluated on the tail side to
/// keep relative accuracy far from the mean.
fn normal_mass(a: f64, b: f64) -> f64 {
    let s = std::f64::consts::FRAC_1_SQRT_2;
    if a >= 0.0 {
        0.5 * (erfc(a * s) - erfc(b * s))
    } else if b <= 0.0 {
        0.5 * (erfc(-b * s) - erfc(-a * s))
    } else {
        1.0 - 0.5 * erfc(-a * s) - 0.5 * erfc(b * s)
    }
}

/// PMF of `round((α + r)/Δ)` for `α ~ N(0, σ²)`.
pub fn conditional_pmf(r: f64, sigma: f64, delta: f64) -> Result<ConditionalPmf> {
    if !(sigma > 0.0) || !sigma.is_finite() {
        return Err(Error::NonPositiveSigma(sigma));
    }
    if !(delta > 0.0) || !delta.is_finite() {
        return Err(Error::NonPositiveInput(format!("step size {delta}")));
    }
    let lo = ((r - TAIL_SIGMAS * sigma) / delta).round() as i64;
    let hi = ((r + TAIL_SIGMAS * sigma) / delta).round() as i64;
    let mut probs: Vec<f64> = (lo..=hi)
        .map(|j| {
            let centre = j as f64 * delta - r;
            normal_mass((centre - 0.5 * delta) / sigma, (centre + 0.5 * delta) / sigma)
                .max(PMF_FLOOR)
        })
        .collect();
    // Floored entries keep the floor; the others share the remaining mass.
    let floored = probs.iter().filter(|p| **p <= PMF_FLOOR).count();
    let free: f64 = probs.iter().filter(|p| **p > PMF_FLOOR).sum();
    let scale = (1.0 - P_ESCAPE - floored as f64 * PMF_FLOOR) / free;
    for p in probs.iter_mut() {
        if *p > PMF_FLOOR {
            *p = (*p * scale).max(PMF_FLOOR);
        }
    }
    Ok(ConditionalPmf { i_min: lo, probs, p_escape: P_ESCAPE })
}

/// Ideal code length `−log2 P(index)` in bits.
pub fn shannon_length(pmf: &ConditionalPmf, index: i64) -> Result<f64> {
    pmf.prob(index).map(|p| -p.log2()).ok_or(Error::IndexOutOfSupport(index))
}
