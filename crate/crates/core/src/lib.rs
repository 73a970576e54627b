//! Zero-delay coding of vector Gaussian autoregressive sources.
//!
//! The crate computes the nonanticipative rate-distortion function of a
//! Gauss–Markov source, builds the Kalman-filter feedback channel that
//! realizes it, and runs an operational codec made of subtractively dithered
//! uniform scalar quantizers followed by per-step entropy coding.

pub mod codec;
pub mod ecdq;
pub mod error;
pub mod linalg;
pub mod model;
pub mod nrdf;
pub mod realization;

pub use error::{Error, Result};

/// Formats a float with 9 significant digits, the precision used for every
/// text output so that reruns diff cleanly.
pub fn fmt_num(v: f64) -> String {
    if v == 0.0 || !v.is_finite() {
        return format!("{v}");
    }
    let s = format!("{v:.8e}");
    let value: f64 = s.parse().unwrap_or(v);
    let exp = value.abs().log10().floor() as i32;
    if (-5..15).contains(&exp) {
        let decimals = (8 - exp).max(0) as usize;
        let mut out = format!("{value:.decimals$}");
        if out.contains('.') {
            while out.ends_with('0') {
                out.pop();
            }
            if out.ends_with('.') {
                out.pop();
            }
        }
        out
    } else {
        s
    }
}
