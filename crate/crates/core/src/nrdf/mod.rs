//! Steady-state nonanticipative rate-distortion function of a Gauss–Markov
//! source and the bounds derived from it.

mod barrier;
mod bounds;
pub mod oracle;
mod waterfill;

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::Serialize;

pub use bounds::{bounds, bounds_for_rate, lattice_gap, scalar_gap, BoundsReport, G_SPHERE};
pub use waterfill::reverse_waterfill;

use crate::error::{Error, Result};
use crate::linalg;
use crate::model::ValidatedModel;

/// Components whose information ratio `λᵢ/δᵢ` is within this of one are
/// treated as carrying zero rate.
pub const ZERO_RATE_SNAP: f64 = 1e-9;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum SolveMethod {
    /// Log-barrier Newton method on the convex log-determinant program.
    LogDet,
    /// Lyapunov update alternated with reverse water-filling in the
    /// eigenbasis of the prior. Cheap, but the fixed point it reaches is
    /// only optimal when the optimal pair of covariances commutes.
    GreedyWaterfill,
}

impl std::str::FromStr for SolveMethod {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "logdet" => Ok(SolveMethod::LogDet),
            "greedy" => Ok(SolveMethod::GreedyWaterfill),
            other => Err(Error::Config(format!("unknown method {other:?} (logdet|greedy)"))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct SolverOptions {
    /// Duality gap in nats for `LogDet`; Frobenius step size for the greedy
    /// iteration.
    pub tol: f64,
    /// Newton steps (`LogDet`) or fixed-point sweeps (greedy).
    pub max_iter: usize,
    /// Relaxation factor of the greedy iteration.
    pub damping: f64,
    pub method: SolveMethod,
}

impl Default for SolverOptions {
    fn default() -> Self {
        SolverOptions { tol: 1e-10, max_iter: 10_000, damping: 0.5, method: SolveMethod::LogDet }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct NrdfSolution {
    pub distortion: f64,
    /// Posterior (filtering) error covariance `Π'`.
    #[serde(serialize_with = "ser_matrix")]
    pub pi_post: DMatrix<f64>,
    /// Prior (prediction) error covariance `Π = AΠ'Aᵀ + BBᵀ`.
    #[serde(serialize_with = "ser_matrix")]
    pub pi_prior: DMatrix<f64>,
    /// Rows are unit vectors; `T·Π·Tᵀ = diag(λ)` and `T·Π'·Tᵀ = diag(δ)`.
    /// Orthogonal whenever `Π` and `Π'` commute.
    #[serde(serialize_with = "ser_matrix")]
    pub basis: DMatrix<f64>,
    #[serde(serialize_with = "ser_vector")]
    pub lambda: DVector<f64>,
    #[serde(serialize_with = "ser_vector")]
    pub delta: DVector<f64>,
    /// Bits per source sample.
    pub rate: f64,
    pub water_level: f64,
    pub iterations: usize,
    pub residual: f64,
    pub method: SolveMethod,
}

fn ser_matrix<S: serde::Serializer>(m: &DMatrix<f64>, s: S) -> std::result::Result<S::Ok, S::Error> {
    use serde::Serialize;
    crate::model::matrix_to_rows(m).serialize(s)
}

fn ser_vector<S: serde::Serializer>(v: &DVector<f64>, s: S) -> std::result::Result<S::Ok, S::Error> {
    use serde::Serialize;
    v.as_slice().serialize(s)
}

impl NrdfSolution {
    pub fn p(&self) -> usize {
        self.pi_post.nrows()
    }

    /// `½ log2(det Π / det Π')`.
    pub fn rate_from_determinants(&self) -> f64 {
        let lp = linalg::ln_det_pd(&self.pi_prior).unwrap_or(f64::NAN);
        let lq = linalg::ln_det_pd(&self.pi_post).unwrap_or(f64::NAN);
        0.5 * (lp - lq) / std::f64::consts::LN_2
    }

    pub fn zero_rate(&self) -> bool {
        self.lambda.iter().zip(self.delta.iter()).all(|(l, d)| l == d)
    }
}

fn rate_bits(lambda: &DVector<f64>, delta: &DVector<f64>) -> f64 {
    0.5 * lambda.iter().zip(delta.iter()).map(|(l, d)| (l / d).log2()).sum::<f64>()
}

/// Stable source with a budget covering its stationary variance: nothing
/// needs to be sent.
fn zero_rate_solution(m: &ValidatedModel, d: f64, method: SolveMethod) -> Option<NrdfSolution> {
    if !m.spectrum.is_stable {
        return None;
    }
    let sigma = linalg::lyapunov(&m.a, &m.noise_cov())?;
    if sigma.trace() > d {
        return None;
    }
    let (lambda, basis) = linalg::sym_eigen_desc(&sigma);
    Some(NrdfSolution {
        distortion: d,
        pi_post: sigma.clone(),
        pi_prior: sigma,
        basis,
        water_level: lambda.max(),
        delta: lambda.clone(),
        lambda,
        rate: 0.0,
        iterations: 0,
        residual: 0.0,
        method,
    })
}

fn check_options(d: f64, opts: &SolverOptions) -> Result<()> {
    if !(d > 0.0) || !d.is_finite() {
        return Err(Error::NonPositiveInput(format!("distortion D = {d}")));
    }
    if !(opts.damping > 0.0 && opts.damping <= 1.0) {
        return Err(Error::Config(format!("damping must lie in (0, 1], got {}", opts.damping)));
    }
    if !(opts.tol > 0.0) {
        return Err(Error::Config(format!("tolerance must be positive, got {}", opts.tol)));
    }
    Ok(())
}

fn full_row_rank(m: &ValidatedModel) -> bool {
    let p = m.p();
    let mut ab = DMatrix::zeros(p, p + m.q());
    ab.view_mut((0, 0), (p, p)).copy_from(&m.a);
    ab.view_mut((0, p), (p, m.q())).copy_from(&m.b);
    let sv = ab.singular_values();
    let largest = sv.amax();
    largest > 0.0 && sv.iter().filter(|s| **s > 1e-12 * largest).count() == p
}

/// Solves the steady-state NRDF at distortion `d` (sum of per-component
/// mean-squared errors).
pub fn solve_nrdf(m: &ValidatedModel, d: f64, opts: &SolverOptions) -> Result<NrdfSolution> {
    check_options(d, opts)?;
    if !m.spectrum.is_stabilizable {
        return Err(Error::NotStabilizable { eigenvalue: Default::default() });
    }
    if let Some(sol) = zero_rate_solution(m, d, opts.method) {
        return Ok(sol);
    }
    if !full_row_rank(m) {
        return Err(Error::DegenerateSource);
    }
    match opts.method {
        SolveMethod::LogDet => solve_logdet(m, d, opts),
        SolveMethod::GreedyWaterfill => solve_greedy(m, d, opts),
    }
}

fn solve_logdet(m: &ValidatedModel, d: f64, opts: &SolverOptions) -> Result<NrdfSolution> {
    let w = m.noise_cov();
    let start = barrier::phase_one(&m.a, &w, d)
        .ok_or(Error::NoConvergence { iterations: 0, residual: f64::INFINITY })?;
    let res = barrier::solve(&m.a, &w, d, start, opts.tol, opts.max_iter)?;
    let pi_post = res.pi_post;
    let pi_prior = linalg::symmetrize(&(&m.a * &pi_post * m.a.transpose() + &w));
    let (basis, lambda, mut delta) = linalg::congruence_diagonalize(&pi_prior, &pi_post)
        .ok_or(Error::NoConvergence { iterations: res.iterations, residual: res.gap })?;
    for i in 0..delta.len() {
        if lambda[i] / delta[i] - 1.0 <= ZERO_RATE_SNAP {
            delta[i] = lambda[i];
        }
    }
    Ok(NrdfSolution {
        distortion: d,
        rate: rate_bits(&lambda, &delta),
        water_level: 0.5 / res.trace_multiplier,
        pi_post,
        pi_prior,
        basis,
        lambda,
        delta,
        iterations: res.iterations,
        residual: res.gap,
        method: SolveMethod::LogDet,
    })
}

fn solve_greedy(m: &ValidatedModel, d: f64, opts: &SolverOptions) -> Result<NrdfSolution> {
    let p = m.p();
    let w = m.noise_cov();
    let mut post = DMatrix::identity(p, p) * (d / p as f64);
    let mut residual = f64::INFINITY;
    for it in 1..=opts.max_iter {
        let prior = linalg::symmetrize(&(&m.a * &post * m.a.transpose() + &w));
        let (lambda, basis) = linalg::sym_eigen_desc(&prior);
        let (delta, xi) = reverse_waterfill(&lambda, d)?;
        let next = basis.transpose() * DMatrix::from_diagonal(&delta) * &basis;
        residual = linalg::frobenius(&(&next - &post));
        if residual <= opts.tol {
            let pi_prior = linalg::symmetrize(&(&m.a * &next * m.a.transpose() + &w));
            let lambda = (&basis * &pi_prior * basis.transpose()).diagonal();
            let delta = delta.zip_map(&lambda, |dl, l| dl.min(l));
            return Ok(NrdfSolution {
                distortion: d,
                rate: rate_bits(&lambda, &delta),
                water_level: xi,
                pi_post: next,
                pi_prior,
                basis,
                lambda,
                delta,
                iterations: it,
                residual,
                method: SolveMethod::GreedyWaterfill,
            });
        }
        post = &post * (1.0 - opts.damping) + next * opts.damping;
    }
    Err(Error::NoConvergence { iterations: opts.max_iter, residual })
}

/// Solves every point of a strictly increasing distortion grid. Points are
/// independent and run on the current rayon pool; output follows the grid.
pub fn rate_distortion_sweep(
    m: &ValidatedModel,
    grid: &[f64],
    opts: &SolverOptions,
) -> Result<Vec<(f64, NrdfSolution)>> {
    if grid.is_empty() {
        return Err(Error::Config("distortion grid is empty".into()));
    }
    if grid.windows(2).any(|w| !(w[1] > w[0])) {
        return Err(Error::Config("distortion grid must be strictly increasing".into()));
    }
    let sols: Vec<Result<NrdfSolution>> = grid
        .par_iter()
        .map(|&d| {
            solve_nrdf(m, d, opts)
                .map_err(|e| Error::AtDistortion { distortion: d, source: Box::new(e) })
        })
        .collect();
    let mut out = Vec::with_capacity(grid.len());
    let mut previous = f64::INFINITY;
    for (d, sol) in grid.iter().zip(sols) {
        let sol = sol?;
        if sol.rate > previous + 1e-6 {
            return Err(Error::NonMonotone { distortion: *d, rate: sol.rate, previous });
        }
        previous = sol.rate;
        out.push((*d, sol));
    }
    Ok(out)
}
