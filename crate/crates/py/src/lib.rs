//! Python bindings: states, the homodyne POVM, the pattern solver and the
//! case-study drivers. Matrices cross the boundary as nested lists of complex
//! numbers.

use num_complex::Complex64;
use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyDict;

use patterntomo::experiment::{self, ExperimentConfig, SpiralParams};
use patterntomo::homodyne::{self, MeasurementConfig, PovmSet};
use patterntomo::pattern::{PatternMatrix, ProbeSet};
use patterntomo::quantum::{self, Coherence, ComplexMatrix, FockMixture};
use patterntomo::solver::{self, SolverOptions};

fn value_err(e: impl std::fmt::Display) -> PyErr {
    PyValueError::new_err(e.to_string())
}

#[pyclass(name = "DensityMatrix", module = "patterntomo_py", frozen, skip_from_py_object)]
#[derive(Clone)]
struct PyDensityMatrix {
    inner: quantum::DensityMatrix,
}

#[pymethods]
impl PyDensityMatrix {
    /// Build from a square nested list; must be Hermitian with unit trace.
    #[new]
    fn new(rows: Vec<Vec<Complex64>>) -> PyResult<Self> {
        let d = rows.len();
        if rows.iter().any(|r| r.len() != d) {
            return Err(PyValueError::new_err("matrix must be square"));
        }
        let m = ComplexMatrix::from_fn(d, d, |r, c| rows[r][c]);
        let inner = quantum::DensityMatrix::new(m).map_err(value_err)?;
        Ok(Self { inner })
    }

    /// Fock mixture padded to `dim`; coherences are `(row, col, re, im)`.
    #[staticmethod]
    #[pyo3(signature = (populations, dim, coherences = Vec::new()))]
    fn fock(
        populations: Vec<f64>,
        dim: usize,
        coherences: Vec<(usize, usize, f64, f64)>,
    ) -> PyResult<Self> {
        let spec = FockMixture {
            populations,
            coherences: coherences
                .into_iter()
                .map(|(row, col, re, im)| Coherence { row, col, re, im })
                .collect(),
        };
        let inner = quantum::fock_mixture(&spec, dim).map_err(value_err)?;
        Ok(Self { inner })
    }

    #[staticmethod]
    fn coherent(alpha: Complex64, dim: usize) -> PyResult<Self> {
        let ket = quantum::coherent_ket(alpha, dim);
        let ket = &ket / Complex64::from(ket.norm());
        let inner = quantum::DensityMatrix::pure(&ket).map_err(value_err)?;
        Ok(Self { inner })
    }

    #[getter]
    fn dim(&self) -> usize {
        self.inner.dim()
    }

    fn trace(&self) -> f64 {
        self.inner.trace()
    }

    fn purity(&self) -> f64 {
        quantum::purity(&self.inner)
    }

    fn eigenvalues(&self) -> Vec<f64> {
        self.inner.eigen().eigenvalues.iter().copied().collect()
    }

    fn min_eigenvalue(&self) -> f64 {
        self.inner.min_eigenvalue()
    }

    fn fidelity(&self, other: &PyDensityMatrix) -> PyResult<f64> {
        quantum::fidelity(&self.inner, &other.inner).map_err(value_err)
    }

    #[pyo3(signature = (alpha = Complex64::new(0.0, 0.0)))]
    fn wigner(&self, alpha: Complex64) -> f64 {
        quantum::wigner_at(&self.inner, alpha)
    }

    fn to_list(&self) -> Vec<Vec<Complex64>> {
        let m = self.inner.matrix();
        (0..m.nrows())
            .map(|r| (0..m.ncols()).map(|c| m[(r, c)]).collect())
            .collect()
    }

    fn __repr__(&self) -> String {
        format!("DensityMatrix(dim={}, purity={:.6})", self.inner.dim(), self.purity())
    }
}

#[pyfunction]
fn coherent_ket(alpha: Complex64, dim: usize) -> Vec<Complex64> {
    quantum::coherent_ket(alpha, dim).iter().copied().collect()
}

#[pyfunction]
#[pyo3(signature = (n, delta_r = 0.0175, delta_phi = 0.5, offset = None))]
fn spiral_probes(n: usize, delta_r: f64, delta_phi: f64, offset: Option<f64>) -> Vec<Complex64> {
    experiment::spiral_probes(
        n,
        &SpiralParams {
            delta_r,
            delta_phi,
            offset,
        },
    )
}

/// Binned homodyne POVM, phase-major.
#[pyclass(name = "Povm", module = "patterntomo_py", frozen)]
struct PyPovm {
    inner: PovmSet,
}

#[pymethods]
impl PyPovm {
    #[new]
    #[pyo3(signature = (dim, phase_count = 6, bin_count = 61, x_min = -6.0, x_max = 6.0, efficiency = 0.8))]
    fn new(
        dim: usize,
        phase_count: usize,
        bin_count: usize,
        x_min: f64,
        x_max: f64,
        efficiency: f64,
    ) -> PyResult<Self> {
        let config = MeasurementConfig {
            phase_count,
            bin_count,
            quadrature_range: [x_min, x_max],
            efficiency,
            ..Default::default()
        };
        let inner = homodyne::build_povm(&config, dim).map_err(value_err)?;
        Ok(Self { inner })
    }

    fn __len__(&self) -> usize {
        self.inner.len()
    }

    #[getter]
    fn phase_count(&self) -> usize {
        self.inner.config().phase_count
    }

    fn completeness_residual(&self) -> f64 {
        self.inner.completeness_residual()
    }

    fn probabilities(&self, rho: &PyDensityMatrix) -> PyResult<Vec<f64>> {
        homodyne::outcome_probabilities(&rho.inner, &self.inner).map_err(value_err)
    }

    /// Multinomial counts per outcome for `shots` draws at every phase.
    fn sample(&self, rho: &PyDensityMatrix, shots: u64, seed: u64) -> PyResult<Vec<u64>> {
        let probs = self.probabilities(rho)?;
        let h = homodyne::sample_histogram(&probs, self.inner.config(), shots, seed)
            .map_err(value_err)?;
        Ok(h.counts)
    }
}

#[pyclass(name = "Solution", module = "patterntomo_py", frozen)]
struct PySolution {
    #[pyo3(get)]
    weights: Vec<f64>,
    #[pyo3(get)]
    rho: PyDensityMatrix,
    #[pyo3(get)]
    status: String,
    #[pyo3(get)]
    iterations: usize,
    #[pyo3(get)]
    objective: f64,
    #[pyo3(get)]
    residual: f64,
    #[pyo3(get)]
    lambda_: f64,
    #[pyo3(get)]
    mu: f64,
    /// `(k, F, residual, mu, alpha, c, min_eig)` per iteration.
    #[pyo3(get)]
    trace: Vec<(usize, f64, f64, f64, f64, f64, f64)>,
}

#[pymethods]
impl PySolution {
    fn __repr__(&self) -> String {
        format!(
            "Solution(status={}, iterations={}, objective={:.3e})",
            self.status, self.iterations, self.objective
        )
    }
}

/// Fit `signal` with the patterns of coherent probes at `amplitudes`.
/// `probe_frequencies[k]` is the frequency vector of probe `k`.
#[pyfunction]
#[pyo3(signature = (amplitudes, probe_frequencies, signal, phase_count, dim, mu0 = 0.01, beta = 0.1, m = None, max_iterations = 500))]
#[allow(clippy::too_many_arguments)]
fn reconstruct(
    py: Python<'_>,
    amplitudes: Vec<Complex64>,
    probe_frequencies: Vec<Vec<f64>>,
    signal: Vec<f64>,
    phase_count: usize,
    dim: usize,
    mu0: f64,
    beta: f64,
    m: Option<f64>,
    max_iterations: usize,
) -> PyResult<PySolution> {
    let probes = ProbeSet::new(amplitudes, dim).map_err(value_err)?;
    let patterns = PatternMatrix::from_frequencies(&probe_frequencies, &signal, phase_count)
        .map_err(value_err)?;
    let opts = SolverOptions {
        mu0,
        beta,
        m,
        max_iterations,
        ..Default::default()
    };
    let sol = py
        .detach(|| solver::solve(&patterns, &probes, &opts))
        .map_err(|e| PyRuntimeError::new_err(e.to_string()))?;
    Ok(PySolution {
        weights: sol.x.iter().copied().collect(),
        rho: PyDensityMatrix { inner: sol.rho },
        status: sol.status.to_string(),
        iterations: sol.iterations,
        objective: sol.objective,
        residual: sol.residual,
        lambda_: sol.lambda,
        mu: sol.mu,
        trace: sol
            .trace
            .records()
            .iter()
            .map(|r| (r.k, r.objective, r.residual, r.mu, r.alpha, r.c, r.min_eigenvalue))
            .collect(),
    })
}

fn load_config(config: Option<&str>) -> PyResult<ExperimentConfig> {
    match config {
        Some(text) => ExperimentConfig::from_toml(text).map_err(value_err),
        None => Ok(ExperimentConfig::default()),
    }
}

/// Simulate and reconstruct every probe count. `config` is TOML text; the
/// defaults reproduce the 8-dimensional case study. Returns one dict per
/// probe count.
#[pyfunction]
#[pyo3(signature = (config = None, seed = None))]
fn run_study<'py>(
    py: Python<'py>,
    config: Option<&str>,
    seed: Option<u64>,
) -> PyResult<Vec<Bound<'py, PyDict>>> {
    let mut cfg = load_config(config)?;
    if let Some(s) = seed {
        cfg.seed = s;
    }
    let report = py
        .detach(|| experiment::run_experiment(&cfg))
        .map_err(value_err)?;
    report
        .records
        .iter()
        .map(|r| {
            let d = PyDict::new(py);
            d.set_item("probe_count", r.probe_count)?;
            d.set_item("status", r.status.map(|s| s.to_string()))?;
            d.set_item("iterations", r.iterations)?;
            d.set_item("fidelity", r.fidelity)?;
            d.set_item("wigner_origin", r.wigner_origin)?;
            d.set_item("purity", r.purity)?;
            d.set_item("min_eigenvalue", r.min_eigenvalue)?;
            d.set_item("error", r.error.clone())?;
            Ok(d)
        })
        .collect()
}

/// `(gamma, purity, mean_fidelity, std_fidelity)` rows.
#[pyfunction]
#[pyo3(signature = (gammas, runs, config = None))]
fn purity_sweep(
    py: Python<'_>,
    gammas: Vec<f64>,
    runs: usize,
    config: Option<&str>,
) -> PyResult<Vec<(f64, f64, f64, f64)>> {
    let cfg = load_config(config)?;
    let rows = py
        .detach(|| experiment::sweep_purity(&cfg, &gammas, runs))
        .map_err(value_err)?;
    Ok(rows
        .iter()
        .map(|r| (r.gamma, r.purity, r.mean_fidelity, r.std_fidelity))
        .collect())
}

#[pymodule]
fn patterntomo_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyDensityMatrix>()?;
    m.add_class::<PyPovm>()?;
    m.add_class::<PySolution>()?;
    m.add_function(wrap_pyfunction!(coherent_ket, m)?)?;
    m.add_function(wrap_pyfunction!(spiral_probes, m)?)?;
    m.add_function(wrap_pyfunction!(reconstruct, m)?)?;
    m.add_function(wrap_pyfunction!(run_study, m)?)?;
    m.add_function(wrap_pyfunction!(purity_sweep, m)?)?;
    Ok(())
}
