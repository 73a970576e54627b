//! Python bindings. Matrices cross the boundary as lists of rows.

use nalgebra::{DMatrix, DVector};
use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;

use zdcodec::codec::{self, SimulationReport};
use zdcodec::model::{self, matrix_from_rows, matrix_to_rows, ArCoefficients, StateSpaceModel};
use zdcodec::nrdf::{self, SolveMethod, SolverOptions};
use zdcodec::{ecdq, Error};

fn to_py(e: Error) -> PyErr {
    match e {
        Error::NoConvergence { .. }
        | Error::AtDistortion { .. }
        | Error::NonMonotone { .. }
        | Error::CodecDesync { .. }
        | Error::BitstreamCorrupt(_) => PyRuntimeError::new_err(e.to_string()),
        _ => PyValueError::new_err(e.to_string()),
    }
}

fn matrix(rows: Vec<Vec<f64>>, name: &str) -> PyResult<DMatrix<f64>> {
    matrix_from_rows(&rows, name).map_err(to_py)
}

/// A validated linear Gaussian source `x_{t+1} = A x_t + B w_t`.
#[pyclass(name = "Model", frozen)]
struct PyModel {
    inner: model::ValidatedModel,
}

#[pymethods]
impl PyModel {
    #[new]
    #[pyo3(signature = (a, b, sigma_x0 = None))]
    fn new(a: Vec<Vec<f64>>, b: Vec<Vec<f64>>, sigma_x0: Option<Vec<Vec<f64>>>) -> PyResult<Self> {
        let sigma = sigma_x0.map(|s| matrix(s, "sigma_x0")).transpose()?;
        let m = StateSpaceModel::new(matrix(a, "A")?, matrix(b, "B")?, sigma).map_err(to_py)?;
        Ok(PyModel { inner: model::validate_model(&m).map_err(to_py)? })
    }

    #[getter]
    fn p(&self) -> usize {
        self.inner.p()
    }

    #[getter]
    fn q(&self) -> usize {
        self.inner.q()
    }

    #[getter]
    fn a(&self) -> Vec<Vec<f64>> {
        matrix_to_rows(&self.inner.a)
    }

    #[getter]
    fn b(&self) -> Vec<Vec<f64>> {
        matrix_to_rows(&self.inner.b)
    }

    #[getter]
    fn sigma_x0(&self) -> Vec<Vec<f64>> {
        matrix_to_rows(&self.inner.sigma_x0)
    }

    #[getter]
    fn eigenvalues(&self) -> Vec<(f64, f64)> {
        self.inner.spectrum.eigenvalues.iter().map(|z| (z.re, z.im)).collect()
    }

    #[getter]
    fn unstable_log_sum(&self) -> f64 {
        self.inner.spectrum.unstable_log_sum
    }

    #[getter]
    fn is_stable(&self) -> bool {
        self.inner.spectrum.is_stable
    }

    /// `n + 1` states of a seeded trajectory.
    fn simulate(&self, n: usize, seed: u64) -> Vec<Vec<f64>> {
        model::simulate_source(&self.inner, n, seed)
            .into_iter()
            .map(|x| x.iter().cloned().collect())
            .collect()
    }

    fn __repr__(&self) -> String {
        format!("Model(p={}, q={})", self.inner.p(), self.inner.q())
    }
}

#[pyclass(name = "NrdfSolution", frozen)]
struct PySolution {
    inner: nrdf::NrdfSolution,
}

#[pymethods]
impl PySolution {
    #[getter]
    fn rate(&self) -> f64 {
        self.inner.rate
    }

    #[getter]
    fn distortion(&self) -> f64 {
        self.inner.distortion
    }

    #[getter]
    fn pi_post(&self) -> Vec<Vec<f64>> {
        matrix_to_rows(&self.inner.pi_post)
    }

    #[getter]
    fn pi_prior(&self) -> Vec<Vec<f64>> {
        matrix_to_rows(&self.inner.pi_prior)
    }

    #[getter]
    fn basis(&self) -> Vec<Vec<f64>> {
        matrix_to_rows(&self.inner.basis)
    }

    #[getter]
    fn eigen_prior(&self) -> Vec<f64> {
        self.inner.lambda.iter().cloned().collect()
    }

    #[getter]
    fn eigen_post(&self) -> Vec<f64> {
        self.inner.delta.iter().cloned().collect()
    }

    #[getter]
    fn water_level(&self) -> f64 {
        self.inner.water_level
    }

    #[getter]
    fn iterations(&self) -> usize {
        self.inner.iterations
    }

    fn to_json(&self) -> PyResult<String> {
        serde_json::to_string(&self.inner).map_err(|e| PyValueError::new_err(e.to_string()))
    }

    fn __repr__(&self) -> String {
        format!("NrdfSolution(D={}, rate={})", self.inner.distortion, self.inner.rate)
    }
}

#[pyclass(name = "SimulationReport", frozen)]
struct PyReport {
    inner: SimulationReport,
}

#[pymethods]
impl PyReport {
    #[getter]
    fn n(&self) -> usize {
        self.inner.n
    }

    #[getter]
    fn empirical_rate(&self) -> f64 {
        self.inner.empirical_rate
    }

    #[getter]
    fn empirical_mse(&self) -> f64 {
        self.inner.empirical_mse
    }

    #[getter]
    fn nrdf_rate(&self) -> f64 {
        self.inner.nrdf_rate
    }

    #[getter]
    fn upper_scalar(&self) -> f64 {
        self.inner.upper_scalar
    }

    #[getter]
    fn ideal_rate(&self) -> f64 {
        self.inner.ideal_bits / self.inner.n as f64
    }

    #[getter]
    fn total_bits(&self) -> u64 {
        self.inner.total_bits
    }

    #[getter]
    fn per_step_lengths(&self) -> Vec<u32> {
        self.inner.per_step_lengths.clone()
    }

    #[getter]
    fn violations(&self) -> Vec<String> {
        self.inner.violations.clone()
    }

    fn to_json(&self) -> PyResult<String> {
        serde_json::to_string(&self.inner).map_err(|e| PyValueError::new_err(e.to_string()))
    }

    fn __repr__(&self) -> String {
        format!(
            "SimulationReport(n={}, rate={}, mse={})",
            self.inner.n, self.inner.empirical_rate, self.inner.empirical_mse
        )
    }
}

#[pyfunction]
#[pyo3(signature = (model, d, tol = 1e-10, max_iter = 10_000, method = "logdet"))]
fn solve_nrdf(model: &PyModel, d: f64, tol: f64, max_iter: usize, method: &str) -> PyResult<PySolution> {
    let method: SolveMethod = method.parse().map_err(to_py)?;
    let opts = SolverOptions { tol, max_iter, method, ..Default::default() };
    let inner = nrdf::solve_nrdf(&model.inner, d, &opts).map_err(to_py)?;
    Ok(PySolution { inner })
}

/// `(lower, upper_scalar, upper_lattice)` for a rate and dimension.
#[pyfunction]
#[pyo3(signature = (rate, p, g_p = None))]
fn bounds(rate: f64, p: usize, g_p: Option<f64>) -> PyResult<(f64, f64, Option<f64>)> {
    let b = nrdf::bounds_for_rate(rate, p, g_p).map_err(to_py)?;
    Ok((b.lower, b.upper_scalar, b.upper_lattice))
}

#[pyfunction]
fn augment_ar(a_list: Vec<Vec<Vec<f64>>>, b: Vec<Vec<f64>>) -> PyResult<PyModel> {
    let a_list = a_list
        .into_iter()
        .enumerate()
        .map(|(j, a)| matrix(a, &format!("A_list[{j}]")))
        .collect::<PyResult<Vec<_>>>()?;
    let m = model::augment_ar(&ArCoefficients { a_list, b: matrix(b, "B")? }).map_err(to_py)?;
    Ok(PyModel { inner: model::validate_model(&m).map_err(to_py)? })
}

#[pyfunction]
fn reverse_waterfill(lambda: Vec<f64>, d: f64) -> PyResult<(Vec<f64>, f64)> {
    let (delta, xi) = nrdf::reverse_waterfill(&DVector::from_vec(lambda), d).map_err(to_py)?;
    Ok((delta.iter().cloned().collect(), xi))
}

#[pyfunction]
fn step_sizes(v: Vec<f64>) -> PyResult<Vec<f64>> {
    let q = ecdq::step_sizes(&DVector::from_vec(v)).map_err(to_py)?;
    Ok(q.steps.iter().cloned().collect())
}

/// `(index, reconstruction)` of the subtractively dithered quantizer.
#[pyfunction]
fn quantize_subtractive(x: f64, delta: f64, r: f64) -> (i64, f64) {
    let q = ecdq::quantize_subtractive(x, delta, r);
    (q.index, q.reconstruction)
}

#[pyfunction]
fn run_pipeline(py: Python<'_>, model: &PyModel, d: f64, n: usize, seed: u64) -> PyResult<PyReport> {
    let m = model.inner.clone();
    let inner = py.detach(move || codec::run_pipeline(&m, d, n, seed)).map_err(to_py)?;
    Ok(PyReport { inner })
}

#[pymodule]
#[pyo3(name = "zdcodec")]
fn zdcodec_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyModel>()?;
    m.add_class::<PySolution>()?;
    m.add_class::<PyReport>()?;
    m.add_function(wrap_pyfunction!(solve_nrdf, m)?)?;
    m.add_function(wrap_pyfunction!(bounds, m)?)?;
    m.add_function(wrap_pyfunction!(augment_ar, m)?)?;
    m.add_function(wrap_pyfunction!(reverse_waterfill, m)?)?;
    m.add_function(wrap_pyfunction!(step_sizes, m)?)?;
    m.add_function(wrap_pyfunction!(quantize_subtractive, m)?)?;
    m.add_function(wrap_pyfunction!(run_pipeline, m)?)?;
    m.add("STREAM_FORMAT_VERSION", codec::FORMAT_VERSION)?;
    m.add("__version__", env!("CARGO_PKG_VERSION"))?;
    Ok(())
}
