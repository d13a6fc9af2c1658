//! Python bindings: electrical networks, resistance profiles, classification
//! and the CLI pipelines. Structured results come back as Python objects
//! decoded from the same JSON the CLI writes.

use std::path::PathBuf;

use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;

use rwce_core::cli::{run_pipeline, Pipeline};
use rwce_core::config::ExperimentConfig;
use rwce_core::electrical;
use rwce_core::graph::Ball;
use rwce_core::network::Network;
use rwce_core::report::to_json;
use rwce_core::walker::{self, ClassifyOptions};
use rwce_core::Error;

fn py_err(e: Error) -> PyErr {
    match e {
        Error::Config(_) | Error::Json(_) | Error::Io(_) | Error::Domain(_) | Error::Precondition(_) => {
            PyValueError::new_err(e.to_string())
        }
        other => PyRuntimeError::new_err(other.to_string()),
    }
}

fn to_py<'py, T: serde::Serialize>(py: Python<'py>, value: &T) -> PyResult<Bound<'py, PyAny>> {
    let text = String::from_utf8(to_json(value)).expect("JSON is UTF-8");
    py.import("json")?.call_method1("loads", (text,))
}

fn parse_config(config_json: &str) -> PyResult<ExperimentConfig> {
    ExperimentConfig::from_json(config_json).map_err(py_err)
}

/// Finite network with positive conductances on vertices `0..n`.
#[pyclass(name = "Network", frozen)]
struct PyNetwork {
    inner: Network,
}

#[pymethods]
impl PyNetwork {
    #[new]
    #[pyo3(signature = (n, edges, conductances=None))]
    fn new(n: usize, edges: Vec<(usize, usize)>, conductances: Option<Vec<f64>>) -> PyResult<Self> {
        let inner = match conductances {
            Some(c) => Network::new(n, edges, c),
            None => Network::unit(n, edges),
        }
        .map_err(py_err)?;
        Ok(PyNetwork { inner })
    }

    #[getter]
    fn vertex_count(&self) -> usize {
        self.inner.vertex_count()
    }

    #[getter]
    fn edges(&self) -> Vec<(usize, usize)> {
        self.inner.edges().to_vec()
    }

    #[getter]
    fn conductances(&self) -> Vec<f64> {
        self.inner.conductances().to_vec()
    }

    /// Voltage with `v(source) = 1` and `v = 0` on `sinks`.
    fn voltage(&self, source: usize, sinks: Vec<usize>) -> PyResult<Vec<f64>> {
        let field = electrical::solve_voltage(&self.inner, source, &sinks).map_err(py_err)?;
        Ok(field.values)
    }

    /// Unit current per edge, oriented along the edge's `(u, w)` order.
    fn unit_current(&self, source: usize, sinks: Vec<usize>) -> PyResult<Vec<f64>> {
        let flow = electrical::unit_current(&self.inner, source, &sinks).map_err(py_err)?;
        Ok(flow.flow)
    }

    fn effective_resistance(&self, source: usize, sinks: Vec<usize>) -> PyResult<f64> {
        electrical::effective_resistance(&self.inner, source, &sinks).map_err(py_err)
    }

    fn __repr__(&self) -> String {
        format!(
            "Network(vertices={}, edges={})",
            self.inner.vertex_count(),
            self.inner.edge_count()
        )
    }
}

/// Resistance profile of the config's initial conductances.
#[pyfunction]
#[pyo3(signature = (config_json, base_dir=None))]
fn resistance_profile<'py>(
    py: Python<'py>,
    config_json: &str,
    base_dir: Option<PathBuf>,
) -> PyResult<Bound<'py, PyAny>> {
    let cfg = parse_config(config_json)?;
    let family = cfg.family(&base_dir.unwrap_or_default()).map_err(py_err)?;
    let rule = cfg.weights.clone();
    let profile = py
        .detach(|| electrical::resistance_profile(&family, &|b: &Ball| rule.weights(b), &cfg.radii))
        .map_err(py_err)?;
    to_py(py, &profile)
}

/// Theorem-based verdict with Monte Carlo statistics.
#[pyfunction]
#[pyo3(signature = (config_json, seed=None, base_dir=None))]
fn classify<'py>(
    py: Python<'py>,
    config_json: &str,
    seed: Option<u64>,
    base_dir: Option<PathBuf>,
) -> PyResult<Bound<'py, PyAny>> {
    let cfg = parse_config(config_json)?;
    let family = cfg.family(&base_dir.unwrap_or_default()).map_err(py_err)?;
    let env = cfg.environment().map_err(py_err)?;
    let opts = ClassifyOptions {
        horizon: cfg.horizon,
        trials: cfg.trials,
        seed: seed.unwrap_or(cfg.seed),
        start: cfg.start_label(),
        radii: cfg.radii.clone(),
        trace_horizon: cfg.trace.horizon,
        trace_radius: cfg.trace.radius,
        probe_radius: cfg.probe_radius,
        max_radius: cfg.max_radius,
        truncation: cfg.truncation,
        visit_radius: cfg.visit_radius,
    };
    let report = py
        .detach(|| walker::classify(&family, &env, &opts))
        .map_err(py_err)?;
    to_py(py, &report)
}

/// Runs `analyze`, `simulate`, `verify` or `report` and returns the report
/// the CLI would write as JSON.
#[pyfunction]
#[pyo3(signature = (subcommand, config_json, seed=None, base_dir=None))]
fn run<'py>(
    py: Python<'py>,
    subcommand: &str,
    config_json: &str,
    seed: Option<u64>,
    base_dir: Option<PathBuf>,
) -> PyResult<Bound<'py, PyAny>> {
    let pipeline = Pipeline::parse(subcommand).map_err(py_err)?;
    let cfg = parse_config(config_json)?;
    let base = base_dir.unwrap_or_default();
    let seed = seed.unwrap_or(cfg.seed);
    let report = py
        .detach(|| run_pipeline(pipeline, &cfg, config_json.as_bytes(), &base, seed))
        .map_err(py_err)?;
    to_py(py, &report)
}

#[pymodule]
fn rwce(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyNetwork>()?;
    m.add_function(wrap_pyfunction!(resistance_profile, m)?)?;
    m.add_function(wrap_pyfunction!(classify, m)?)?;
    m.add_function(wrap_pyfunction!(run, m)?)?;
    m.add("__version__", env!("CARGO_PKG_VERSION"))?;
    Ok(())
}
