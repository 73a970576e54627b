//! Feedback realization of the optimal test channel: the innovation
//! `k_t = x_t − A y_{t−1}` is decorrelated, scaled, sent through parallel
//! additive-noise channels and rescaled so that the decoder output is the
//! Kalman estimate of the source.

use std::io::Write;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::linalg;
use crate::model::{SourceNoise, ValidatedModel};
use crate::nrdf::NrdfSolution;

/// Default per-component channel-noise variance: a unit quantizer step.
pub const DEFAULT_V: f64 = 1.0 / 12.0;

/// Relative gap below which `δᵢ` is taken to equal `λᵢ`.
const SNAP: f64 = 1e-12;

/// Number of initial steps ignored by the moment estimates.
pub const BURN_IN: usize = 1000;

#[derive(Clone, Debug, PartialEq)]
pub struct RealizationParams {
    /// Decorrelating transform (rows unit norm).
    pub basis: DMatrix<f64>,
    pub basis_inv: DMatrix<f64>,
    pub h: DVector<f64>,
    pub theta: DVector<f64>,
    pub phi: DVector<f64>,
    /// Channel-noise variances (diagonal of `Σ_v`).
    pub v: DVector<f64>,
    pub zero_rate: Vec<bool>,
    pub lambda: DVector<f64>,
    pub delta: DVector<f64>,
}

impl RealizationParams {
    pub fn p(&self) -> usize {
        self.h.len()
    }

    /// `diag(Φ)·T`, mapping an innovation to the channel input.
    pub fn precoder(&self) -> DMatrix<f64> {
        DMatrix::from_diagonal(&self.phi) * &self.basis
    }

    /// `T⁻¹·diag(Θ)`, mapping a channel output back to state coordinates.
    pub fn postcoder(&self) -> DMatrix<f64> {
        &self.basis_inv * DMatrix::from_diagonal(&self.theta)
    }

    /// Stationary variance of each channel input, `Φᵢ²λᵢ`.
    pub fn sigma_alpha2(&self) -> DVector<f64> {
        self.phi.zip_map(&self.lambda, |f, l| f * f * l)
    }

    /// `Σᵢ ½ log2(1 + Φᵢ²λᵢ/Vᵢ)`, the mutual information of the parallel
    /// Gaussian channels.
    pub fn channel_rate(&self) -> f64 {
        (0..self.p())
            .map(|i| 0.5 * (1.0 + self.phi[i].powi(2) * self.lambda[i] / self.v[i]).log2())
            .sum()
    }

    pub fn all_zero_rate(&self) -> bool {
        self.zero_rate.iter().all(|z| *z)
    }
}

/// Channel matrices for a solution. `sigma_v` defaults to `1/12` per
/// component; any positive choice works since `Θ` compensates.
pub fn derive_channel(sol: &NrdfSolution, sigma_v: Option<&DVector<f64>>) -> Result<RealizationParams> {
    let p = sol.p();
    let v = match sigma_v {
        Some(v) if v.len() != p => {
            return Err(Error::DimensionMismatch(format!(
                "sigma_v has {} entries, expected {p}",
                v.len()
            )))
        }
        Some(v) => v.clone(),
        None => DVector::from_element(p, DEFAULT_V),
    };
    if let Some(bad) = v.iter().find(|x| !(**x > 0.0) || !x.is_finite()) {
        return Err(Error::NonPositiveVariance(format!("channel noise variance {bad}")));
    }
    let basis_inv = sol
        .basis
        .clone()
        .try_inverse()
        .ok_or_else(|| Error::InvalidCovariance("solution basis is singular".into()))?;
    let mut h = DVector::zeros(p);
    let mut theta = DVector::zeros(p);
    let mut phi = DVector::zeros(p);
    let mut zero_rate = vec![false; p];
    let mut delta = sol.delta.clone();
    for i in 0..p {
        let (l, d) = (sol.lambda[i], sol.delta[i]);
        if !(d > 0.0) || d > l * (1.0 + SNAP) {
            return Err(Error::DegenerateComponent { component: i, delta: d, lambda: l });
        }
        if l - d <= SNAP * l {
            delta[i] = l;
            zero_rate[i] = true;
            continue;
        }
        h[i] = 1.0 - d / l;
        theta[i] = (h[i] * d / v[i]).sqrt();
        phi[i] = h[i] / theta[i];
    }
    Ok(RealizationParams {
        basis: sol.basis.clone(),
        basis_inv,
        h,
        theta,
        phi,
        v,
        zero_rate,
        lambda: sol.lambda.clone(),
        delta,
    })
}

/// One step of the loop. Vectors are expressed relative to the trace's
/// moving origin (see [`RealizationTrace`]).
#[derive(Clone, Debug, PartialEq)]
pub struct StepRecord {
    pub x: DVector<f64>,
    pub xhat: DVector<f64>,
    pub k: DVector<f64>,
    pub alpha: DVector<f64>,
    pub beta: DVector<f64>,
    pub ktilde: DVector<f64>,
    pub y: DVector<f64>,
    /// `‖x_t − y_t‖²`.
    pub sqerr: f64,
    /// `‖k_t − k̃_t‖²`, equal to `sqerr` up to rounding.
    pub sqerr_innovation: f64,
    /// The origin was moved onto `x̂_{t|t−1}` before this step.
    pub recentered: bool,
}

/// Output of [`simulate_awgn`].
///
/// Unstable sources grow without bound, so the loop works in a moving frame.
/// Whenever the state leaves a window of a few standard deviations the
/// origin jumps to the current prediction `A y_{t−1}` (and then follows the
/// source dynamics), which leaves `k`, `k̃` and `x − y` untouched.
#[derive(Clone, Debug, PartialEq)]
pub struct RealizationTrace {
    pub steps: Vec<StepRecord>,
}

impl RealizationTrace {
    pub fn mse(&self, burn_in: usize) -> f64 {
        let s = &self.steps[burn_in.min(self.steps.len())..];
        s.iter().map(|r| r.sqerr).sum::<f64>() / s.len().max(1) as f64
    }

    /// Sample covariance of `T k_t`.
    pub fn innovation_cov(&self, basis: &DMatrix<f64>, burn_in: usize) -> DMatrix<f64> {
        let s = &self.steps[burn_in.min(self.steps.len())..];
        let p = basis.nrows();
        let mut c = DMatrix::zeros(p, p);
        for r in s {
            let u = basis * &r.k;
            c += &u * u.transpose();
        }
        c / s.len().max(1) as f64
    }

    /// Lag-one sample correlation matrix of the channel outputs `β_t`.
    pub fn beta_lag1_correlation(&self, burn_in: usize) -> DMatrix<f64> {
        let s = &self.steps[burn_in.min(self.steps.len())..];
        let p = s.first().map_or(0, |r| r.beta.len());
        let n = s.len() as f64;
        let mean = s.iter().fold(DVector::zeros(p), |acc, r| acc + &r.beta) / n;
        let mut var = DVector::<f64>::zeros(p);
        for r in s {
            var += (&r.beta - &mean).map(|v| v * v);
        }
        let sd = (var / n).map(f64::sqrt);
        let mut c = DMatrix::zeros(p, p);
        for w in s.windows(2) {
            let a = &w[0].beta - &mean;
            let b = &w[1].beta - &mean;
            c += &a * b.transpose();
        }
        c /= n - 1.0;
        DMatrix::from_fn(p, p, |i, j| {
            if sd[i] > 0.0 && sd[j] > 0.0 {
                c[(i, j)] / (sd[i] * sd[j])
            } else {
                0.0
            }
        })
    }

    /// CSV with header `t,x_*,y_*,k_*,ktilde_*,sqerr`.
    pub fn write_csv<W: Write>(&self, out: &mut W) -> Result<()> {
        let p = self.steps.first().map_or(0, |r| r.x.len());
        let mut header = vec!["t".to_string()];
        for name in ["x", "y", "k", "ktilde"] {
            header.extend((1..=p).map(|i| format!("{name}_{i}")));
        }
        header.push("sqerr".into());
        writeln!(out, "{}", header.join(","))?;
        for (t, r) in self.steps.iter().enumerate() {
            let mut row = vec![t.to_string()];
            for v in [&r.x, &r.y, &r.k, &r.ktilde] {
                row.extend(v.iter().map(|x| crate::fmt_num(*x)));
            }
            row.push(crate::fmt_num(r.sqerr));
            writeln!(out, "{}", row.join(","))?;
        }
        Ok(())
    }
}

/// Size of the window, in prior standard deviations, outside which the
/// simulation frame is re-anchored.
pub(crate) fn recenter_radius(sol: &NrdfSolution) -> f64 {
    64.0 * sol.pi_prior.trace().max(1e-300).sqrt()
}

/// Runs the feedback loop with Gaussian channel noise `v_t ~ N(0, Σ_v)`.
/// Source noise uses stream 0 of `seed`, channel noise stream 1.
pub fn simulate_awgn(
    m: &ValidatedModel,
    params: &RealizationParams,
    sol: &NrdfSolution,
    n: usize,
    seed: u64,
) -> RealizationTrace {
    let p = m.p();
    let pre = params.precoder();
    let post = params.postcoder();
    let sd_v = params.v.map(f64::sqrt);
    let radius = recenter_radius(sol);
    let mut src = SourceNoise::new(seed, m.q());
    let mut chan = SourceNoise::with_stream(seed, 1, p);
    let mut x = src.initial_state(m);
    let mut y_prev = DVector::zeros(p);
    let mut steps = Vec::with_capacity(n);
    for t in 0..n {
        let mut recentered = false;
        if t > 0 && (x.amax() > radius || y_prev.amax() > radius) {
            x -= &m.a * &y_prev;
            y_prev.fill(0.0);
            recentered = true;
        }
        let xhat = &m.a * &y_prev;
        let k = &x - &xhat;
        let alpha = &pre * &k;
        let v = chan.normals(p).component_mul(&sd_v);
        let beta = &alpha + v;
        let ktilde = &post * &beta;
        let y = &ktilde + &xhat;
        let sqerr = (&x - &y).norm_squared();
        let sqerr_innovation = (&k - &ktilde).norm_squared();
        let w = src.next_w();
        let x_next = m.propagate(&x, &w);
        steps.push(StepRecord {
            x,
            xhat,
            k,
            alpha,
            beta,
            ktilde,
            y: y.clone(),
            sqerr,
            sqerr_innovation,
            recentered,
        });
        x = x_next;
        y_prev = y;
    }
    RealizationTrace { steps }
}

#[derive(Clone, Debug, PartialEq)]
pub struct KalmanTrace {
    /// `Π_{t|t−1}` for `t = 0..horizon`.
    pub prior: Vec<DMatrix<f64>>,
    /// `Π_{t|t}`.
    pub post: Vec<DMatrix<f64>>,
    /// `‖G_t − I‖_F`, or `‖(G_t − I)S_t‖_F` when some component carries no
    /// rate and `S_t` is singular.
    pub gain_error: Vec<f64>,
    /// `‖Π_{t|t−1} − Π‖_F`.
    pub prior_error: Vec<f64>,
    /// First `t` with `prior_error ≤ 1e-6`.
    pub converged_at: Option<usize>,
}

/// Iterates the Kalman recursions for the observation `k̃ = C k + n` seen by
/// the decoder, with `C = T⁻¹HT` and `cov(n) = T⁻¹ diag(Hδ) T⁻ᵀ` held at
/// their steady-state values. The gain `G_t` is the Kalman gain in the
/// parameterization where the update reads `x̂_{t|t} = x̂_{t|t−1} + G_t k̃_t`.
pub fn kalman_recursion(
    m: &ValidatedModel,
    params: &RealizationParams,
    sol: &NrdfSolution,
    pi0: &DMatrix<f64>,
    horizon: usize,
) -> KalmanTrace {
    let p = m.p();
    let eye = DMatrix::<f64>::identity(p, p);
    let c = &params.basis_inv * DMatrix::from_diagonal(&params.h) * &params.basis;
    let hd = params.h.component_mul(&params.delta);
    let r = &params.basis_inv * DMatrix::from_diagonal(&hd) * params.basis_inv.transpose();
    let w = m.noise_cov();
    let singular = params.zero_rate.iter().any(|z| *z);
    let mut out = KalmanTrace {
        prior: Vec::with_capacity(horizon),
        post: Vec::with_capacity(horizon),
        gain_error: Vec::with_capacity(horizon),
        prior_error: Vec::with_capacity(horizon),
        converged_at: None,
    };
    let mut prior = linalg::symmetrize(pi0);
    for t in 0..horizon {
        let s = linalg::symmetrize(&(&c * &prior * c.transpose() + &r));
        let s_inv = linalg::pinv_sym(&s, 1e-13);
        let g = &prior * c.transpose() * &s_inv;
        let post = linalg::symmetrize(&(&prior - &g * &s * g.transpose()));
        let gain_error = if singular {
            linalg::frobenius(&((&g - &eye) * &s))
        } else {
            linalg::frobenius(&(&g - &eye))
        };
        let err = linalg::frobenius(&(&prior - &sol.pi_prior));
        if err <= 1e-6 && out.converged_at.is_none() {
            out.converged_at = Some(t);
        }
        out.prior_error.push(err);
        out.gain_error.push(gain_error);
        out.prior.push(prior.clone());
        prior = linalg::symmetrize(&(&m.a * &post * m.a.transpose() + &w));
        out.post.push(post);
    }
    out
}
