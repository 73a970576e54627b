use std::f64::consts::{E, PI};

use serde::Serialize;

use super::NrdfSolution;
use crate::error::{Error, Result};

/// Normalized second moment of a sphere in infinite dimension, `1/(2πe)`.
pub const G_SPHERE: f64 = 1.0 / (2.0 * PI * E);

const GP_TOL: f64 = 1e-12;

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct BoundsReport {
    pub p: usize,
    pub lower: f64,
    pub upper_scalar: f64,
    pub upper_lattice: Option<f64>,
    pub space_filling_gap_scalar: f64,
    pub g_p: Option<f64>,
}

/// Rate overhead of per-component uniform scalar quantization plus one bit
/// of prefix-code slack: `p/2·log2(πe/6) + 1`.
pub fn scalar_gap(p: usize) -> f64 {
    0.5 * p as f64 * (PI * E / 6.0).log2() + 1.0
}

/// Same overhead for a lattice with normalized second moment `g_p`.
pub fn lattice_gap(p: usize, g_p: f64) -> Result<f64> {
    if !g_p.is_finite() || g_p < G_SPHERE - GP_TOL {
        return Err(Error::InvalidGp(g_p));
    }
    Ok(0.5 * p as f64 * (2.0 * PI * E * g_p).log2() + 1.0)
}

/// Bounds for a given lower-bound rate and dimension.
pub fn bounds_for_rate(rate: f64, p: usize, g_p: Option<f64>) -> Result<BoundsReport> {
    let gap = scalar_gap(p);
    let upper_lattice = g_p.map(|g| lattice_gap(p, g).map(|l| rate + l)).transpose()?;
    Ok(BoundsReport {
        p,
        lower: rate,
        upper_scalar: rate + gap,
        upper_lattice,
        space_filling_gap_scalar: gap,
        g_p,
    })
}

pub fn bounds(sol: &NrdfSolution, g_p: Option<f64>) -> Result<BoundsReport> {
    bounds_for_rate(sol.rate, sol.p(), g_p)
}
