use num_complex::Complex64;
use pyo3::exceptions::PyValueError;
use pyo3::prelude::*;
use pyo3::types::PyDict;

use mrteleport_core as mr;

use mr::measurement::{
    bell_basis, build_measurement, damping_adapted_basis, tilted_joint_basis, JointBasis,
    MeasurementSet,
};
use mr::reversal::{
    coarse_optimal_reversal, optimal_reversal, verify_reversal, RecombinationStrategy, ReversalPlan,
};
use mr::scenarios::{EnsembleSpec, Method, NoiseMode, ScenarioSpec};
use mr::states::{kraus, tilted_pair, NoiseKind};
use mr::sweep::{Grid, SweepConfig};
use mr::tensor::ComplexMatrix;

fn err(e: impl std::fmt::Display) -> PyErr {
    PyValueError::new_err(e.to_string())
}

fn to_py_json<'py>(py: Python<'py>, text: &str) -> PyResult<Bound<'py, PyAny>> {
    py.import("json")?.call_method1("loads", (text,))
}

fn matrix_rows(m: &ComplexMatrix) -> Vec<Vec<Complex64>> {
    (0..m.rows())
        .map(|i| (0..m.cols()).map(|j| m[(i, j)]).collect())
        .collect()
}

/// Measurement operators of the tilted pair, optionally with single-qubit noise.
#[pyclass(name = "MeasurementSet", module = "mrteleport")]
struct PyMeasurementSet {
    inner: MeasurementSet,
}

#[pymethods]
impl PyMeasurementSet {
    /// `basis` is "bell", "tilted" (uses `phi`) or "adapted" (uses `d`).
    #[staticmethod]
    #[pyo3(signature = (theta, basis="bell", phi=None, noise=None, mode="b", d=0.0))]
    fn tilted(
        theta: f64,
        basis: &str,
        phi: Option<f64>,
        noise: Option<&str>,
        mode: &str,
        d: f64,
    ) -> PyResult<Self> {
        let joint: JointBasis = match basis {
            "bell" => bell_basis(),
            "tilted" => {
                tilted_joint_basis(phi.unwrap_or(std::f64::consts::FRAC_PI_2)).map_err(err)?
            }
            "adapted" => damping_adapted_basis(d).map_err(err)?,
            other => return Err(err(format!("unknown basis `{other}`"))),
        };
        let channels = match noise {
            Some(k) => {
                let kind: NoiseKind = k.parse().map_err(err)?;
                let mode: NoiseMode = mode.parse().map_err(err)?;
                vec![kraus(kind, d).map_err(err)?.on(mode.label())]
            }
            None => Vec::new(),
        };
        let pair = tilted_pair(theta).map_err(err)?;
        let inner = build_measurement(&pair, joint, &channels).map_err(err)?;
        Ok(Self { inner })
    }

    fn __len__(&self) -> usize {
        self.inner.len()
    }

    /// Operators of outcome `i` as nested lists of complex numbers.
    fn operators(&self, i: usize) -> PyResult<Vec<Vec<Vec<Complex64>>>> {
        if i >= self.inner.len() {
            return Err(err(format!("outcome {i} out of range")));
        }
        Ok(self
            .inner
            .group(i)
            .operators
            .iter()
            .map(matrix_rows)
            .collect())
    }

    fn completeness_residual(&self) -> f64 {
        self.inner.completeness_residual()
    }

    fn outcome_probabilities(&self, psi: Vec<Complex64>) -> PyResult<Vec<f64>> {
        if psi.len() != self.inner.input_dim() {
            return Err(err(format!(
                "state must have {} amplitudes",
                self.inner.input_dim()
            )));
        }
        Ok(self.inner.outcome_probabilities(&psi))
    }

    fn info_gain(&self) -> f64 {
        mr::metrics::exact_info_gain(&self.inner)
    }

    /// Per-outcome SVD reversal; coarse-grained when noise hides a label.
    fn optimal_reversal(&self) -> PyResult<PyReversalPlan> {
        let coarse = self.inner.groups().iter().any(|g| g.operators.len() > 1);
        let plan = if coarse {
            coarse_optimal_reversal(&self.inner, &RecombinationStrategy::canonical())
        } else {
            optimal_reversal(&self.inner)
        }
        .map_err(err)?;
        let residual = verify_reversal(&self.inner, &plan).map_err(err)?;
        let p = mr::metrics::exact_success_probability(&self.inner, &plan).map_err(err)?;
        let fidelity = mr::metrics::teleport_fidelity(
            &self.inner,
            &plan,
            &mr::states::default_qubit_quadrature(),
        )
        .map_err(err)?
        .value;
        Ok(PyReversalPlan {
            inner: plan,
            residual,
            p,
            fidelity,
        })
    }
}

#[pyclass(name = "ReversalPlan", module = "mrteleport")]
struct PyReversalPlan {
    inner: ReversalPlan,
    #[pyo3(get)]
    residual: f64,
    /// Haar-averaged success probability.
    #[pyo3(get)]
    p: f64,
    #[pyo3(get)]
    fidelity: f64,
}

#[pymethods]
impl PyReversalPlan {
    #[getter]
    fn lambda_stars(&self) -> Vec<f64> {
        self.inner.lambda_stars()
    }

    fn success_operator(&self, i: usize) -> PyResult<Vec<Vec<Complex64>>> {
        if i >= self.inner.len() {
            return Err(err(format!("outcome {i} out of range")));
        }
        Ok(matrix_rows(&self.inner.outcome(i).success))
    }

    fn instrument_residual(&self) -> f64 {
        self.inner.instrument_residual()
    }
}

/// Runs a named scenario and returns its report as a dict.
#[pyfunction]
#[pyo3(signature = (name, theta=None, phi=None, noise=None, mode="b", d=0.0, n=None, optimized=false, coeffs=None, method=None, samples=100_000, seed=0))]
#[allow(clippy::too_many_arguments)]
fn run_scenario<'py>(
    py: Python<'py>,
    name: &str,
    theta: Option<f64>,
    phi: Option<f64>,
    noise: Option<&str>,
    mode: &str,
    d: f64,
    n: Option<Complex64>,
    optimized: bool,
    coeffs: Option<Vec<f64>>,
    method: Option<&str>,
    samples: usize,
    seed: u64,
) -> PyResult<Bound<'py, PyAny>> {
    let mut spec = ScenarioSpec::new(name);
    if let Some(t) = theta {
        spec = spec.theta(t);
    }
    spec.phi = phi;
    if let Some(k) = noise {
        spec = spec.noise(k.parse().map_err(err)?, mode.parse().map_err(err)?, d);
    }
    if let Some(z) = n {
        spec = spec.agrawal(z, optimized);
    }
    if let Some(c) = coeffs {
        spec = spec.coeffs(c);
    }
    let method: Option<Method> = method.map(str::parse).transpose().map_err(err)?;
    spec = spec.ensemble(EnsembleSpec {
        method,
        samples,
        seed,
    });
    let rep = py
        .detach(|| mr::scenarios::run_scenario(&spec))
        .map_err(err)?;
    to_py_json(py, &serde_json::to_string(&rep).map_err(err)?)
}

/// Noisy-scenario grid; returns a list of row dicts, or CSV text with `csv=True`.
#[pyfunction]
#[pyo3(signature = (noise="damping", mode="b", theta_grid=(0.0, std::f64::consts::FRAC_PI_2, 11), d_grid=(0.0, 1.0, 11), method="quad", samples=100_000, seed=0, csv=false))]
#[allow(clippy::too_many_arguments)]
fn sweep<'py>(
    py: Python<'py>,
    noise: &str,
    mode: &str,
    theta_grid: (f64, f64, usize),
    d_grid: (f64, f64, usize),
    method: &str,
    samples: usize,
    seed: u64,
    csv: bool,
) -> PyResult<Bound<'py, PyAny>> {
    let cfg = SweepConfig {
        noise: noise.parse().map_err(err)?,
        mode: mode.parse().map_err(err)?,
        theta_grid: Grid::new(theta_grid.0, theta_grid.1, theta_grid.2),
        d_grid: Grid::new(d_grid.0, d_grid.1, d_grid.2),
        method: method.parse().map_err(err)?,
        samples,
        seed,
        ..SweepConfig::default()
    };
    let rows = py.detach(|| mr::sweep::run_sweep(&cfg)).map_err(err)?;
    if csv {
        Ok(mr::sweep::to_csv(&rows).into_pyobject(py)?.into_any())
    } else {
        to_py_json(py, &serde_json::to_string(&rows).map_err(err)?)
    }
}

#[pyfunction]
fn closed_form_oracle(name: &str, theta: f64, d: f64) -> PyResult<f64> {
    mr::metrics::closed_form_oracle(name, theta, d).map_err(err)
}

/// `(lhs, satisfied)` of the gain/probability bound.
#[pyfunction]
fn tradeoff_check(g: f64, p: f64, d: usize) -> (f64, bool) {
    let t = mr::metrics::tradeoff_check(g, p, d);
    (t.lhs, t.satisfied)
}

/// Runs acceptance checks; `only` filters by name, number or tag.
#[pyfunction]
#[pyo3(signature = (only=None))]
fn verify<'py>(py: Python<'py>, only: Option<Vec<String>>) -> PyResult<Vec<Bound<'py, PyDict>>> {
    let results = py
        .detach(|| mr::verify::run_checks(&only.unwrap_or_default()))
        .map_err(err)?;
    results
        .into_iter()
        .map(|r| {
            let d = PyDict::new(py);
            d.set_item("id", r.id)?;
            d.set_item("name", r.name)?;
            d.set_item("passed", r.passed)?;
            d.set_item("detail", r.detail)?;
            d.set_item("elapsed", r.elapsed)?;
            Ok(d)
        })
        .collect()
}

#[pymodule]
fn mrteleport(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyMeasurementSet>()?;
    m.add_class::<PyReversalPlan>()?;
    m.add_function(wrap_pyfunction!(run_scenario, m)?)?;
    m.add_function(wrap_pyfunction!(sweep, m)?)?;
    m.add_function(wrap_pyfunction!(closed_form_oracle, m)?)?;
    m.add_function(wrap_pyfunction!(tradeoff_check, m)?)?;
    m.add_function(wrap_pyfunction!(verify, m)?)?;
    m.add("ORACLE_NAMES", mr::metrics::ORACLE_NAMES.to_vec())?;
    m.add("SCENARIO_NAMES", mr::scenarios::SCENARIO_NAMES.to_vec())?;
    Ok(())
}
