//! Python bindings. Matrices cross the boundary as lists of rows, results
//! with several fields as plain dicts.

use nalgebra::{DMatrix, DVector};
use pyo3::exceptions::PyValueError;
use pyo3::prelude::*;
use pyo3::types::PyDict;

use l1flow_core as core;

fn err(e: core::Error) -> PyErr {
    PyValueError::new_err(e.to_string())
}

fn matrix(rows: Vec<Vec<f64>>) -> PyResult<DMatrix<f64>> {
    let ncols = rows.first().map_or(0, Vec::len);
    if rows.iter().any(|r| r.len() != ncols) {
        return Err(PyValueError::new_err("matrix rows have different lengths"));
    }
    Ok(DMatrix::from_fn(rows.len(), ncols, |i, j| rows[i][j]))
}

fn rows(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    m.row_iter().map(|r| r.iter().copied().collect()).collect()
}

/// Serializes through JSON so the dict mirrors the CLI output exactly.
fn to_dict<'py, T: serde::Serialize>(py: Python<'py>, value: &T) -> PyResult<Bound<'py, PyAny>> {
    let text = serde_json::to_string(value).map_err(|e| PyValueError::new_err(e.to_string()))?;
    py.import("json")?.call_method1("loads", (text,))
}

#[pyclass(module = "l1flow", frozen)]
struct Network {
    inner: core::Network,
}

#[pymethods]
impl Network {
    /// Undirected network from one-based `(head, tail)` pairs.
    #[new]
    fn new(m: usize, edges: Vec<(usize, usize)>) -> PyResult<Self> {
        let inner = core::Network::from_one_based(m, &edges).map_err(err)?;
        Ok(Self { inner })
    }

    #[staticmethod]
    fn path(m: usize) -> Self {
        Self {
            inner: core::Network::path(m),
        }
    }

    #[staticmethod]
    fn ring(m: usize) -> PyResult<Self> {
        Ok(Self {
            inner: core::Network::ring(m).map_err(err)?,
        })
    }

    #[staticmethod]
    fn star(m: usize) -> Self {
        Self {
            inner: core::Network::star(m),
        }
    }

    #[staticmethod]
    fn complete(m: usize) -> Self {
        Self {
            inner: core::Network::complete(m),
        }
    }

    #[getter]
    fn m(&self) -> usize {
        self.inner.m()
    }

    #[getter]
    fn edges(&self) -> Vec<(usize, usize)> {
        self.inner
            .edges()
            .iter()
            .map(|&(h, t)| (h + 1, t + 1))
            .collect()
    }

    fn incidence_matrix(&self) -> Vec<Vec<f64>> {
        rows(&self.inner.incidence_matrix())
    }

    fn is_connected(&self) -> bool {
        self.inner.is_connected()
    }

    fn __repr__(&self) -> String {
        format!("Network(m={}, edges={:?})", self.inner.m(), self.edges())
    }
}

/// The built-in 4-agent system: `{"blocks": [{"a", "b"}...], "edges"}`.
#[pyfunction]
fn fixture(py: Python<'_>) -> PyResult<Bound<'_, PyDict>> {
    let (system, graph) = core::fixture_paper_4agent();
    let blocks: Vec<Bound<'_, PyDict>> = system
        .blocks()
        .iter()
        .map(|(a, b)| {
            let d = PyDict::new(py);
            d.set_item("a", rows(a))?;
            d.set_item("b", b.iter().copied().collect::<Vec<_>>())?;
            Ok(d)
        })
        .collect::<PyResult<_>>()?;
    let out = PyDict::new(py);
    out.set_item("blocks", blocks)?;
    out.set_item("edges", Network { inner: graph }.edges())?;
    Ok(out)
}

#[pyfunction]
#[pyo3(signature = (a, tol = 1e-10))]
fn has_full_row_rank(a: Vec<Vec<f64>>, tol: f64) -> PyResult<bool> {
    core::has_full_row_rank(&matrix(a)?, tol).map_err(err)
}

#[pyfunction]
fn kernel_projector(a: Vec<Vec<f64>>) -> PyResult<Vec<Vec<f64>>> {
    let p = core::kernel_projector(&matrix(a)?).map_err(err)?;
    Ok(rows(p.matrix()))
}

#[pyfunction]
fn min_l1_lp(py: Python<'_>, a: Vec<Vec<f64>>, b: Vec<f64>) -> PyResult<Bound<'_, PyAny>> {
    let cert = core::min_l1_lp(&matrix(a)?, &DVector::from_vec(b)).map_err(err)?;
    to_dict(py, &cert)
}

#[pyfunction]
fn vertex_enum_oracle(py: Python<'_>, a: Vec<Vec<f64>>, b: Vec<f64>) -> PyResult<Bound<'_, PyAny>> {
    let cert = core::vertex_enum_oracle(&matrix(a)?, &DVector::from_vec(b)).map_err(err)?;
    to_dict(py, &cert)
}

/// `k(t) = delta_bar / (t + 1) + delta`.
#[pyfunction]
fn k_schedule(delta_bar: f64, delta: f64, t: f64) -> PyResult<f64> {
    let s = core::KSchedule::hyperbolic(delta_bar, delta).map_err(err)?;
    core::k_schedule(&s, t).map_err(err)
}

#[pyfunction]
#[pyo3(signature = (x, eps = 0.0))]
fn sgn_select(x: Vec<f64>, eps: f64) -> PyResult<Vec<f64>> {
    let sel =
        core::sgn_select(&DVector::from_vec(x), eps, core::ZeroRule::Zero, None).map_err(err)?;
    Ok(sel.value.iter().copied().collect())
}

/// Runs a JSON config. Returns the summary dict and, per sample, the time
/// and the consensus and constraint residuals. Files are written only when
/// `output_dir` is given.
#[pyfunction]
#[pyo3(signature = (config_json, output_dir = None))]
fn run_experiment<'py>(
    py: Python<'py>,
    config_json: &str,
    output_dir: Option<std::path::PathBuf>,
) -> PyResult<(Bound<'py, PyAny>, Bound<'py, PyDict>)> {
    let cfg = core::ExperimentConfig::from_json_str(config_json).map_err(err)?;
    let (traj, summary) = py.detach(|| core::run_experiment(&cfg)).map_err(err)?;
    if let Some(dir) = output_dir {
        core::experiment::write_outputs_to(&traj, &summary, &cfg, &dir).map_err(err)?;
    }
    let series = PyDict::new(py);
    series.set_item("times", &traj.times)?;
    series.set_item("consensus_residual", &traj.consensus_residual)?;
    series.set_item("constraint_residual", &traj.constraint_residual)?;
    Ok((to_dict(py, &summary)?, series))
}

#[pyfunction]
#[pyo3(signature = (config_json, samples = 1000))]
fn delta_bound<'py>(
    py: Python<'py>,
    config_json: &str,
    samples: usize,
) -> PyResult<Bound<'py, PyAny>> {
    let cfg = core::ExperimentConfig::from_json_str(config_json).map_err(err)?;
    let resolved = cfg.resolve().map_err(err)?;
    let est = py
        .detach(|| core::delta_bound_estimate(&resolved.system, &resolved.graph, samples))
        .map_err(err)?;
    to_dict(py, &est)
}

#[pymodule]
fn l1flow(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<Network>()?;
    m.add_function(wrap_pyfunction!(fixture, m)?)?;
    m.add_function(wrap_pyfunction!(has_full_row_rank, m)?)?;
    m.add_function(wrap_pyfunction!(kernel_projector, m)?)?;
    m.add_function(wrap_pyfunction!(min_l1_lp, m)?)?;
    m.add_function(wrap_pyfunction!(vertex_enum_oracle, m)?)?;
    m.add_function(wrap_pyfunction!(k_schedule, m)?)?;
    m.add_function(wrap_pyfunction!(sgn_select, m)?)?;
    m.add_function(wrap_pyfunction!(run_experiment, m)?)?;
    m.add_function(wrap_pyfunction!(delta_bound, m)?)?;
    Ok(())
}
