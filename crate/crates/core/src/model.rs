//! Gauss–Markov source models: construction, validation, AR(s) augmentation
//! and seeded simulation.

use std::io::Write;
use std::path::Path;

use nalgebra::{Complex, DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg;

/// Eigenvalues within this distance of the unit circle are treated as
/// marginal: they count neither as stable nor as unstable.
pub const UNIT_CIRCLE_TOL: f64 = 1e-10;

/// `x_{t+1} = A x_t + B w_t`, `w_t ~ N(0, I_q)`, `x_0 ~ N(0, Σ_x0)`.
#[derive(Clone, Debug, PartialEq)]
pub struct StateSpaceModel {
    pub a: DMatrix<f64>,
    pub b: DMatrix<f64>,
    pub sigma_x0: DMatrix<f64>,
}

impl StateSpaceModel {
    /// Builds a model, checking dimensions and the initial covariance.
    /// Without `sigma_x0` the stationary covariance is used when `A` is
    /// stable and the identity otherwise.
    pub fn new(a: DMatrix<f64>, b: DMatrix<f64>, sigma_x0: Option<DMatrix<f64>>) -> Result<Self> {
        let p = a.nrows();
        if p == 0 || !a.is_square() {
            return Err(Error::DimensionMismatch(format!(
                "A must be square and non-empty, got {}x{}",
                a.nrows(),
                a.ncols()
            )));
        }
        if b.nrows() != p || b.ncols() == 0 {
            return Err(Error::DimensionMismatch(format!(
                "B must be {p}xq with q >= 1, got {}x{}",
                b.nrows(),
                b.ncols()
            )));
        }
        if a.iter().chain(b.iter()).any(|v| !v.is_finite()) {
            return Err(Error::Config("A and B must be finite".into()));
        }
        let sigma_x0 = match sigma_x0 {
            Some(s) => {
                check_covariance(&s, p)?;
                s
            }
            None => {
                let w = &b * b.transpose();
                linalg::lyapunov(&a, &w).unwrap_or_else(|| DMatrix::identity(p, p))
            }
        };
        Ok(StateSpaceModel { a, b, sigma_x0 })
    }

    pub fn p(&self) -> usize {
        self.a.nrows()
    }

    pub fn q(&self) -> usize {
        self.b.ncols()
    }

    /// Driving-noise covariance `BBᵀ`.
    pub fn noise_cov(&self) -> DMatrix<f64> {
        &self.b * self.b.transpose()
    }

    /// One step of the state recursion with explicit noise.
    pub fn propagate(&self, x: &DVector<f64>, w: &DVector<f64>) -> DVector<f64> {
        &self.a * x + &self.b * w
    }
}

fn check_covariance(s: &DMatrix<f64>, p: usize) -> Result<()> {
    if s.nrows() != p || s.ncols() != p {
        return Err(Error::DimensionMismatch(format!(
            "sigma_x0 must be {p}x{p}, got {}x{}",
            s.nrows(),
            s.ncols()
        )));
    }
    let scale = s.amax().max(1.0);
    if (s - s.transpose()).amax() > 1e-12 * scale {
        return Err(Error::InvalidCovariance("sigma_x0 is not symmetric".into()));
    }
    let min = linalg::min_eigenvalue(s);
    if min < -1e-10 {
        return Err(Error::InvalidCovariance(format!(
            "sigma_x0 has negative eigenvalue {min:e}"
        )));
    }
    Ok(())
}

#[derive(Clone, Debug, PartialEq)]
pub struct SpectrumReport {
    pub eigenvalues: Vec<Complex<f64>>,
    /// `Σ log2|λ|` over eigenvalues strictly outside the unit circle.
    pub unstable_log_sum: f64,
    /// All eigenvalues strictly inside the unit circle.
    pub is_stable: bool,
    pub is_stabilizable: bool,
    /// Eigenvalues on the unit circle (within [`UNIT_CIRCLE_TOL`]).
    pub marginal: Vec<Complex<f64>>,
}

/// A model that passed [`validate_model`]. Downstream modules only accept this.
#[derive(Clone, Debug, PartialEq)]
pub struct ValidatedModel {
    pub model: StateSpaceModel,
    pub spectrum: SpectrumReport,
}

impl std::ops::Deref for ValidatedModel {
    type Target = StateSpaceModel;
    fn deref(&self) -> &StateSpaceModel {
        &self.model
    }
}

fn eigenvalues(a: &DMatrix<f64>) -> Vec<Complex<f64>> {
    let mut ev: Vec<Complex<f64>> = a.complex_eigenvalues().iter().cloned().collect();
    ev.sort_by(|x, y| y.norm().total_cmp(&x.norm()).then(y.re.total_cmp(&x.re)));
    ev
}

/// PBH test: `rank [A − λI, B] = p`.
fn reachable(a: &DMatrix<f64>, b: &DMatrix<f64>, lambda: Complex<f64>) -> bool {
    let p = a.nrows();
    let q = b.ncols();
    let mut m = DMatrix::<Complex<f64>>::zeros(p, p + q);
    for i in 0..p {
        for j in 0..p {
            m[(i, j)] = Complex::new(a[(i, j)], 0.0);
        }
        m[(i, i)] -= lambda;
        for j in 0..q {
            m[(i, p + j)] = Complex::new(b[(i, j)], 0.0);
        }
    }
    let sv = m.singular_values();
    let largest = sv.amax();
    if largest == 0.0 {
        return false;
    }
    // λ is only known to working precision, so the rank cut is looser than
    // the bare p·eps·σ_max.
    let cut = largest * (p as f64 * f64::EPSILON).max(1e-9);
    sv.iter().filter(|s| **s > cut).count() == p
}

pub fn spectrum(m: &StateSpaceModel) -> SpectrumReport {
    let eigenvalues = eigenvalues(&m.a);
    let unstable_log_sum = eigenvalues
        .iter()
        .map(|l| l.norm())
        .filter(|r| *r > 1.0 + UNIT_CIRCLE_TOL)
        .map(f64::log2)
        .sum();
    let is_stable = eigenvalues.iter().all(|l| l.norm() < 1.0 - UNIT_CIRCLE_TOL);
    let marginal: Vec<_> = eigenvalues
        .iter()
        .filter(|l| (l.norm() - 1.0).abs() <= UNIT_CIRCLE_TOL)
        .cloned()
        .collect();
    let is_stabilizable = eigenvalues
        .iter()
        .filter(|l| l.norm() >= 1.0 - UNIT_CIRCLE_TOL)
        .all(|l| reachable(&m.a, &m.b, *l));
    SpectrumReport { eigenvalues, unstable_log_sum, is_stable, is_stabilizable, marginal }
}

/// Checks stabilizability of `(A, B)` and attaches the spectrum.
pub fn validate_model(m: &StateSpaceModel) -> Result<ValidatedModel> {
    if m.b.nrows() != m.p() || !m.a.is_square() || m.sigma_x0.shape() != m.a.shape() {
        return Err(Error::DimensionMismatch("A, B and sigma_x0 disagree on p".into()));
    }
    let spectrum = spectrum(m);
    if !spectrum.is_stabilizable {
        let eigenvalue = spectrum
            .eigenvalues
            .iter()
            .find(|l| l.norm() >= 1.0 - UNIT_CIRCLE_TOL && !reachable(&m.a, &m.b, **l))
            .cloned()
            .unwrap_or_default();
        return Err(Error::NotStabilizable { eigenvalue });
    }
    Ok(ValidatedModel { model: m.clone(), spectrum })
}

/// Coefficients of `x_{t+1} = A_1 x_t + … + A_s x_{t−s+1} + B w_t`.
#[derive(Clone, Debug, PartialEq)]
pub struct ArCoefficients {
    pub a_list: Vec<DMatrix<f64>>,
    pub b: DMatrix<f64>,
}

impl ArCoefficients {
    pub fn order(&self) -> usize {
        self.a_list.len()
    }
}

/// Rewrites an AR(s) source as an AR(1) source on the stacked state
/// `(x_t, x_{t−1}, …, x_{t−s+1})`.
pub fn augment_ar(c: &ArCoefficients) -> Result<StateSpaceModel> {
    let s = c.order();
    if s == 0 {
        return Err(Error::Config("AR order must be at least 1".into()));
    }
    let p = c.a_list[0].nrows();
    for (j, a) in c.a_list.iter().enumerate() {
        if a.nrows() != p || a.ncols() != p {
            return Err(Error::DimensionMismatch(format!(
                "A_{} is {}x{}, expected {p}x{p}",
                j + 1,
                a.nrows(),
                a.ncols()
            )));
        }
    }
    if c.b.nrows() != p {
        return Err(Error::DimensionMismatch(format!(
            "B has {} rows, expected {p}",
            c.b.nrows()
        )));
    }
    if s == 1 {
        return StateSpaceModel::new(c.a_list[0].clone(), c.b.clone(), None);
    }
    let q = c.b.ncols();
    let mut a = DMatrix::zeros(s * p, s * p);
    for (j, aj) in c.a_list.iter().enumerate() {
        a.view_mut((0, j * p), (p, p)).copy_from(aj);
    }
    for j in 1..s {
        a.view_mut((j * p, (j - 1) * p), (p, p)).fill_with_identity();
    }
    let mut b = DMatrix::zeros(s * p, s * q);
    b.view_mut((0, 0), (p, q)).copy_from(&c.b);
    StateSpaceModel::new(a, b, None)
}

/// Seeded Gaussian draws for a source: the initial state, then one noise
/// vector per step. Normals come from ChaCha20 (stream 0) through the
/// ziggurat transform of `rand_distr::StandardNormal`.
pub struct SourceNoise {
    rng: ChaCha20Rng,
    q: usize,
}

impl SourceNoise {
    pub fn new(seed: u64, q: usize) -> Self {
        Self::with_stream(seed, 0, q)
    }

    pub fn with_stream(seed: u64, stream: u64, q: usize) -> Self {
        let mut rng = ChaCha20Rng::seed_from_u64(seed);
        rng.set_stream(stream);
        SourceNoise { rng, q }
    }

    pub fn normals(&mut self, n: usize) -> DVector<f64> {
        DVector::from_fn(n, |_, _| StandardNormal.sample(&mut self.rng))
    }

    /// `x_0 = Σ_x0^{1/2} z`.
    pub fn initial_state(&mut self, m: &StateSpaceModel) -> DVector<f64> {
        let z = self.normals(m.p());
        linalg::psd_sqrt(&m.sigma_x0) * z
    }

    pub fn next_w(&mut self) -> DVector<f64> {
        self.normals(self.q)
    }
}

/// Returns `n + 1` states `x_0 … x_n`.
pub fn simulate_source(m: &StateSpaceModel, n: usize, seed: u64) -> Vec<DVector<f64>> {
    let mut noise = SourceNoise::new(seed, m.q());
    let mut traj = Vec::with_capacity(n + 1);
    let mut x = noise.initial_state(m);
    traj.push(x.clone());
    for _ in 0..n {
        let w = noise.next_w();
        x = m.propagate(&x, &w);
        traj.push(x.clone());
    }
    traj
}

pub fn write_trajectory_csv<W: Write>(out: &mut W, traj: &[DVector<f64>]) -> Result<()> {
    let p = traj.first().map_or(0, |x| x.len());
    let header: Vec<String> = (1..=p).map(|i| format!("x_{i}")).collect();
    writeln!(out, "t,{}", header.join(","))?;
    for (t, x) in traj.iter().enumerate() {
        let row: Vec<String> = x.iter().map(|v| crate::fmt_num(*v)).collect();
        writeln!(out, "{t},{}", row.join(","))?;
    }
    Ok(())
}

/// On-disk model description. Matrices are row-major nested arrays.
#[derive(Clone, Debug, Default, Serialize, Deserialize, PartialEq)]
pub struct ModelConfig {
    #[serde(rename = "A", default, skip_serializing_if = "Option::is_none")]
    pub a: Option<Vec<Vec<f64>>>,
    #[serde(rename = "B")]
    pub b: Vec<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sigma_x0: Option<Vec<Vec<f64>>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ar_order: Option<usize>,
    #[serde(rename = "A_list", default, skip_serializing_if = "Option::is_none")]
    pub a_list: Option<Vec<Vec<Vec<f64>>>>,
}

/// What a config file describes.
#[derive(Clone, Debug, PartialEq)]
pub enum ModelSpec {
    StateSpace(StateSpaceModel),
    Ar(ArCoefficients),
}

impl ModelSpec {
    /// The AR(1) form, augmenting if needed.
    pub fn into_state_space(self) -> Result<StateSpaceModel> {
        match self {
            ModelSpec::StateSpace(m) => Ok(m),
            ModelSpec::Ar(c) => augment_ar(&c),
        }
    }
}

pub fn matrix_from_rows(rows: &[Vec<f64>], name: &str) -> Result<DMatrix<f64>> {
    let r = rows.len();
    let c = rows.first().map_or(0, |row| row.len());
    if r == 0 || c == 0 || rows.iter().any(|row| row.len() != c) {
        return Err(Error::Config(format!("{name} must be a non-empty rectangular array")));
    }
    Ok(DMatrix::from_fn(r, c, |i, j| rows[i][j]))
}

pub fn matrix_to_rows(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    m.row_iter().map(|r| r.iter().cloned().collect()).collect()
}

impl ModelConfig {
    pub fn to_spec(&self) -> Result<ModelSpec> {
        let b = matrix_from_rows(&self.b, "B")?;
        if let Some(list) = &self.a_list {
            let a_list = list
                .iter()
                .enumerate()
                .map(|(j, m)| matrix_from_rows(m, &format!("A_list[{j}]")))
                .collect::<Result<Vec<_>>>()?;
            if let Some(s) = self.ar_order {
                if s != a_list.len() {
                    return Err(Error::Config(format!(
                        "ar_order is {s} but A_list has {} entries",
                        a_list.len()
                    )));
                }
            }
            if a_list.is_empty() {
                return Err(Error::Config("A_list is empty".into()));
            }
            return Ok(ModelSpec::Ar(ArCoefficients { a_list, b }));
        }
        let a = self
            .a
            .as_ref()
            .ok_or_else(|| Error::Config("missing field A (or A_list)".into()))?;
        let a = matrix_from_rows(a, "A")?;
        let sigma = self.sigma_x0.as_ref().map(|s| matrix_from_rows(s, "sigma_x0")).transpose()?;
        Ok(ModelSpec::StateSpace(StateSpaceModel::new(a, b, sigma)?))
    }

    pub fn from_model(m: &StateSpaceModel) -> Self {
        ModelConfig {
            a: Some(matrix_to_rows(&m.a)),
            b: matrix_to_rows(&m.b),
            sigma_x0: Some(matrix_to_rows(&m.sigma_x0)),
            ar_order: None,
            a_list: None,
        }
    }
}

pub fn load_model_config(path: &Path) -> Result<ModelConfig> {
    let text = std::fs::read_to_string(path)?;
    Ok(serde_json::from_str(&text)?)
}
