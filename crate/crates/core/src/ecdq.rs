//! Subtractively dithered uniform scalar quantization.

use nalgebra::DVector;

use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq)]
pub struct QuantizerConfig {
    pub steps: DVector<f64>,
    pub v_diag: DVector<f64>,
}

/// Step sizes `Δᵢ = sqrt(12 Vᵢ)` matching the channel-noise variances.
pub fn step_sizes(v_diag: &DVector<f64>) -> Result<QuantizerConfig> {
    if let Some(bad) = v_diag.iter().find(|v| !(**v > 0.0) || !v.is_finite()) {
        return Err(Error::NonPositiveVariance(format!("V = {bad}")));
    }
    Ok(QuantizerConfig { steps: v_diag.map(|v| (12.0 * v).sqrt()), v_diag: v_diag.clone() })
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Quantized {
    pub index: i64,
    /// `index · Δ`, the quantizer output before the dither is removed.
    pub quantized: f64,
    /// `index · Δ − r`.
    pub reconstruction: f64,
}

/// `index = round((x + r)/Δ)`, ties away from zero.
pub fn quantize_subtractive(x: f64, delta: f64, r: f64) -> Quantized {
    let index = ((x + r) / delta).round() as i64;
    reconstruct(index, delta, r)
}

/// Decoder side: rebuild the output from an index and the shared dither.
pub fn reconstruct(index: i64, delta: f64, r: f64) -> Quantized {
    let quantized = index as f64 * delta;
    Quantized { index, quantized, reconstruction: quantized - r }
}

const DITHER_DOMAIN: u64 = 0x5a44_4b46_6469_7468;

/// splitmix64 finalizer.
pub fn mix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Shared dither: a pure function of `(seed, t, i)`, so encoder and decoder
/// (or any number of threads) obtain the same values without coordination.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct DitherStream {
    pub seed: u64,
}

impl DitherStream {
    pub fn new(seed: u64) -> Self {
        DitherStream { seed }
    }

    /// Uniform on `[0, 1)` with 53-bit resolution.
    pub fn unit(&self, t: u64, i: usize) -> f64 {
        let key = mix64(mix64(self.seed ^ DITHER_DOMAIN) ^ t) ^ i as u64;
        (mix64(key) >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    /// Dither for component `i` at step `t`, uniform on `[−Δ/2, Δ/2)`.
    pub fn sample(&self, t: u64, i: usize, delta: f64) -> f64 {
        delta * (self.unit(t, i) - 0.5)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn step_size_examples() {
        let q = step_sizes(&DVector::from_vec(vec![1.0 / 12.0])).unwrap();
        assert!((q.steps[0] - 1.0).abs() < 1e-15);
        let q = step_sizes(&DVector::from_vec(vec![1.0 / 12.0, 1.0 / 3.0])).unwrap();
        assert!((q.steps[1] - 2.0).abs() < 1e-15);
        let q = step_sizes(&DVector::from_vec(vec![3.0])).unwrap();
        assert_eq!(q.steps[0], 6.0);
        for i in 0..q.steps.len() {
            assert!((q.steps[i].powi(2) / 12.0 - q.v_diag[i]).abs() < 1e-12);
        }
        assert!(matches!(
            step_sizes(&DVector::from_vec(vec![0.0])),
            Err(Error::NonPositiveVariance(_))
        ));
    }

    #[test]
    fn quantizer_examples() {
        let q = quantize_subtractive(0.4, 1.0, 0.2);
        assert_eq!((q.index, q.quantized), (1, 1.0));
        assert!((q.reconstruction - 0.8).abs() < 1e-15);
        let q = quantize_subtractive(0.0, 1.0, 0.0);
        assert_eq!((q.index, q.reconstruction), (0, 0.0));
        let q = quantize_subtractive(-1.75, 0.5, -0.1);
        assert_eq!((q.index, q.quantized), (-4, -2.0));
        assert!((q.reconstruction + 1.9).abs() < 1e-15);
    }

    #[test]
    fn ties_round_away_from_zero() {
        assert_eq!(quantize_subtractive(0.5, 1.0, 0.0).index, 1);
        assert_eq!(quantize_subtractive(-0.5, 1.0, 0.0).index, -1);
        assert_eq!(quantize_subtractive(2.5, 1.0, 0.0).index, 3);
    }

    #[test]
    fn dither_is_reproducible_and_in_range() {
        let d = DitherStream::new(42);
        assert_eq!(d.sample(7, 1, 1.0), DitherStream::new(42).sample(7, 1, 1.0));
        assert_ne!(d.sample(7, 1, 1.0), d.sample(7, 0, 1.0));
        assert_ne!(d.sample(7, 1, 1.0), DitherStream::new(43).sample(7, 1, 1.0));
        for t in 0..10_000 {
            let r = d.sample(t, 0, 2.0);
            assert!((-1.0..1.0).contains(&r));
        }
    }
}
