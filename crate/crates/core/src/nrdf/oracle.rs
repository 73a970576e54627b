//! Brute-force reference values for the NRDF of one- and two-dimensional
//! sources, used to cross-check the main solver.

use std::f64::consts::PI;

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::model::ValidatedModel;

const FEASIBILITY_TOL: f64 = 1e-9;
const ZOOM_ROUNDS: usize = 10;
const ZOOM_RES: usize = 20;

struct Evaluator {
    a: [[f64; 2]; 2],
    w: [[f64; 2]; 2],
    d: f64,
}

impl Evaluator {
    /// Rate in bits at `P = R(θ) diag(d1, d2) R(θ)ᵀ`, `d2 = (D − d1)·u`;
    /// `None` when infeasible.
    fn rate2(&self, d1: f64, u: f64, theta: f64) -> Option<f64> {
        let d2 = (self.d - d1) * u;
        if !(d1 > 0.0 && d2 > 0.0) {
            return None;
        }
        let (s, c) = theta.sin_cos();
        let p00 = c * c * d1 + s * s * d2;
        let p11 = s * s * d1 + c * c * d2;
        let p01 = c * s * (d1 - d2);
        let a = &self.a;
        // A P
        let ap00 = a[0][0] * p00 + a[0][1] * p01;
        let ap01 = a[0][0] * p01 + a[0][1] * p11;
        let ap10 = a[1][0] * p00 + a[1][1] * p01;
        let ap11 = a[1][0] * p01 + a[1][1] * p11;
        // A P Aᵀ + W
        let q00 = ap00 * a[0][0] + ap01 * a[0][1] + self.w[0][0];
        let q01 = ap00 * a[1][0] + ap01 * a[1][1] + self.w[0][1];
        let q11 = ap10 * a[1][0] + ap11 * a[1][1] + self.w[1][1];
        let (g00, g01, g11) = (q00 - p00, q01 - p01, q11 - p11);
        let half = 0.5 * (g00 - g11);
        let min_eig = 0.5 * (g00 + g11) - (half * half + g01 * g01).sqrt();
        if min_eig < -FEASIBILITY_TOL {
            return None;
        }
        let ratio = (q00 * q11 - q01 * q01) / (d1 * d2);
        Some(0.5 * ratio.max(1.0).log2())
    }
}

/// `(d1, u, θ)` of the stationary covariance, found by iterating
/// `Σ ← AΣAᵀ + W`, when it exists and fits the distortion budget.
fn stationary_params(ev: &Evaluator) -> Option<[f64; 3]> {
    let a = &ev.a;
    let mut s = ev.w;
    for _ in 0..1_000_000 {
        let mut next = ev.w;
        for i in 0..2 {
            for j in 0..2 {
                for k in 0..2 {
                    for l in 0..2 {
                        next[i][j] += a[i][k] * s[k][l] * a[j][l];
                    }
                }
            }
        }
        let change = (0..4).map(|k| (next[k / 2][k % 2] - s[k / 2][k % 2]).abs()).fold(0.0, f64::max);
        s = next;
        if !change.is_finite() || change > 1e12 {
            return None;
        }
        if change <= 1e-15 * (s[0][0] + s[1][1]) {
            let theta = 0.5 * (2.0 * s[0][1]).atan2(s[0][0] - s[1][1]);
            let (sn, c) = theta.sin_cos();
            let d1 = c * c * s[0][0] + 2.0 * c * sn * s[0][1] + sn * sn * s[1][1];
            let d2 = s[0][0] + s[1][1] - d1;
            if d1 + d2 > ev.d || d1 >= ev.d {
                return None;
            }
            return Some([d1, d2 / (ev.d - d1), theta.rem_euclid(PI)]);
        }
    }
    None
}

fn rate1(a: f64, w: f64, post: f64) -> Option<f64> {
    let prior = a * a * post + w;
    (post > 0.0 && prior - post >= -FEASIBILITY_TOL).then(|| 0.5 * (prior / post).max(1.0).log2())
}

/// Minimizes the rate over a `resolution`-point grid per parameter
/// (`resolution³` points for two-dimensional sources), then zooms in
/// around the best grid point.
pub fn grid_oracle_nrdf(m: &ValidatedModel, d: f64, resolution: usize) -> Result<f64> {
    let p = m.p();
    if p > 2 {
        return Err(Error::DimensionTooLarge(p));
    }
    if !(d > 0.0) {
        return Err(Error::NonPositiveInput(format!("distortion D = {d}")));
    }
    let res = resolution.max(2);
    let w: DMatrix<f64> = m.noise_cov();
    if p == 1 {
        let (a, w) = (m.a[(0, 0)], w[(0, 0)]);
        let mut best = (f64::INFINITY, d);
        for i in 1..=res {
            let x = d * i as f64 / res as f64;
            if let Some(r) = rate1(a, w, x) {
                if r < best.0 {
                    best = (r, x);
                }
            }
        }
        let mut half = d / res as f64;
        for _ in 0..ZOOM_ROUNDS {
            let centre = best.1;
            for i in 0..=2 * ZOOM_RES {
                let x = (centre - half + half * i as f64 / ZOOM_RES as f64).min(d);
                if let Some(r) = rate1(a, w, x) {
                    if r < best.0 {
                        best = (r, x);
                    }
                }
            }
            half /= ZOOM_RES as f64 / 2.0;
        }
        return Ok(best.0);
    }

    let ev = Evaluator {
        a: [[m.a[(0, 0)], m.a[(0, 1)]], [m.a[(1, 0)], m.a[(1, 1)]]],
        w: [[w[(0, 0)], w[(0, 1)]], [w[(1, 0)], w[(1, 1)]]],
        d,
    };
    let mut best = (f64::INFINITY, [d / 2.0, 1.0, 0.0]);
    // The zero-rate point P = Σ (stationary covariance) is the apex of a
    // thin feasible cone that a grid never hits, so it is tried explicitly.
    if let Some(x) = stationary_params(&ev) {
        if let Some(r) = ev.rate2(x[0], x[1], x[2]) {
            best = (r, x);
        }
    }
    let steps = [d / res as f64, 1.0 / res as f64, PI / res as f64];
    for i in 1..=res {
        let d1 = steps[0] * i as f64;
        for j in 1..=res {
            let u = steps[1] * j as f64;
            for k in 0..res {
                let theta = steps[2] * k as f64;
                if let Some(r) = ev.rate2(d1, u, theta) {
                    if r < best.0 {
                        best = (r, [d1, u, theta]);
                    }
                }
            }
        }
    }
    let mut half = [2.0 * steps[0], 2.0 * steps[1], 2.0 * steps[2]];
    for _ in 0..ZOOM_ROUNDS {
        let c = best.1;
        let n = ZOOM_RES;
        for i in 0..=n {
            let d1 = (c[0] - half[0] + 2.0 * half[0] * i as f64 / n as f64).min(d);
            for j in 0..=n {
                let u = (c[1] - half[1] + 2.0 * half[1] * j as f64 / n as f64).min(1.0);
                for k in 0..=n {
                    let theta = c[2] - half[2] + 2.0 * half[2] * k as f64 / n as f64;
                    if let Some(r) = ev.rate2(d1, u, theta) {
                        if r < best.0 {
                            best = (r, [d1, u, theta]);
                        }
                    }
                }
            }
        }
        for h in half.iter_mut() {
            *h /= n as f64 / 4.0;
        }
    }
    Ok(best.0)
}
