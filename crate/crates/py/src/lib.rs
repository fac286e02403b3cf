//! Python bindings for wsnsim.

use std::path::PathBuf;

use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;

use wsnsim::channel::{LinkState, ScriptedDraws};
use wsnsim::config::ExperimentConfig;
use wsnsim::engine;
use wsnsim::neural::{self, SizingFormula};
use wsnsim::rng::{Stream, StreamSeeds};
use wsnsim::stat_models::{DelayModel as CoreDelay, DropModel as CoreDrop, PROTOCOL_PRESETS};
use wsnsim::topology;
use wsnsim::trace;

fn value_err(e: impl std::fmt::Display) -> PyErr {
    PyValueError::new_err(e.to_string())
}

/// Hop-count drop model `p = clamp((delta0 + delta1 * n_hops^2) / 100, 0, 1)`.
#[pyclass(name = "DropModel", module = "wsnsim_py", from_py_object)]
#[derive(Clone)]
struct PyDropModel {
    inner: CoreDrop,
}

#[pymethods]
impl PyDropModel {
    #[new]
    fn new(delta0: f64, delta1: f64) -> PyResult<Self> {
        Ok(Self { inner: CoreDrop::new("custom", delta0, delta1).map_err(value_err)? })
    }

    #[staticmethod]
    fn preset(name: &str) -> PyResult<Self> {
        CoreDrop::preset(name).map(|inner| Self { inner }).ok_or_else(|| value_err(format!("unknown preset '{name}'")))
    }

    #[staticmethod]
    fn random(seed: u64) -> Self {
        Self { inner: CoreDrop::random(&mut StreamSeeds::new(seed).rng(Stream::DropModel)) }
    }

    #[getter]
    fn protocol(&self) -> String {
        self.inner.protocol.clone()
    }

    #[getter]
    fn delta0(&self) -> f64 {
        self.inner.delta0
    }

    #[getter]
    fn delta1(&self) -> f64 {
        self.inner.delta1
    }

    fn drop_probability(&self, n_hops: u32) -> PyResult<f64> {
        self.inner.drop_probability(n_hops).map_err(value_err)
    }

    fn __repr__(&self) -> String {
        format!("DropModel({}, delta0={}, delta1={})", self.inner.protocol, self.inner.delta0, self.inner.delta1)
    }
}

/// Truncated-Gaussian per-hop delay model.
#[pyclass(name = "DelayModel", module = "wsnsim_py", from_py_object)]
#[derive(Clone)]
struct PyDelayModel {
    inner: CoreDelay,
}

#[pymethods]
impl PyDelayModel {
    #[new]
    #[pyo3(signature = (mu=1.0, sigma=0.6, a=0.3, b=5.0, t_wait=1.0, per_hop_delay_ms=65.0))]
    fn new(mu: f64, sigma: f64, a: f64, b: f64, t_wait: f64, per_hop_delay_ms: f64) -> PyResult<Self> {
        Ok(Self { inner: CoreDelay::new(mu, sigma, a, b, t_wait, per_hop_delay_ms).map_err(value_err)? })
    }

    fn pdf(&self, x: f64) -> PyResult<f64> {
        self.inner.pdf(x).map_err(value_err)
    }

    fn cdf(&self, x: f64) -> PyResult<f64> {
        self.inner.cdf(x).map_err(value_err)
    }

    fn truncated_mean(&self) -> PyResult<f64> {
        self.inner.truncated_mean().map_err(value_err)
    }

    /// `n` per-hop delay samples from a seeded stream.
    fn sample(&self, n: usize, seed: u64) -> Vec<f64> {
        let mut rng = StreamSeeds::new(seed).rng(Stream::LinkDelay(0));
        (0..n).map(|_| self.inner.sample(&mut rng)).collect()
    }

    fn max_delay(&self, n_hops: u32) -> u64 {
        self.inner.max_delay(n_hops)
    }

    #[getter]
    fn t_wait(&self) -> f64 {
        self.inner.t_wait
    }
}

/// One directed link driven by explicit per-presentation outcomes.
#[pyclass(name = "Link", module = "wsnsim_py")]
struct PyLink {
    inner: LinkState,
}

#[pymethods]
impl PyLink {
    #[new]
    #[pyo3(signature = (n_hops, max_delay, initial_value=0.5))]
    fn new(n_hops: u32, max_delay: u64, initial_value: f64) -> PyResult<Self> {
        Ok(Self { inner: LinkState::new(0, 1, n_hops, 0.0, max_delay, initial_value).map_err(value_err)? })
    }

    /// Sends `value` at presentation `k`; `delay=None` drops the packet.
    #[pyo3(signature = (k, value, delay))]
    fn transmit(&mut self, k: u64, value: f64, delay: Option<u64>) -> PyResult<Option<u64>> {
        let mut draws = ScriptedDraws::new([delay]);
        match self.inner.transmit(k, value, &mut draws).map_err(value_err)? {
            wsnsim::channel::TransmitOutcome::Scheduled { arrival } => Ok(Some(arrival)),
            wsnsim::channel::TransmitOutcome::Dropped => Ok(None),
        }
    }

    /// Returns `(value, origin)` the receiver uses at presentation `k`.
    fn receive(&mut self, k: u64) -> PyResult<(f64, u64)> {
        let r = self.inner.receive(k).map_err(value_err)?;
        Ok((r.value, r.origin))
    }

    fn scheduled_at(&self, k: u64) -> u64 {
        self.inner.scheduled_at(k)
    }
}

/// `(name, beta0, beta1, delta0, delta1)` for every protocol preset.
#[pyfunction]
fn presets() -> Vec<(String, f64, f64, f64, f64)> {
    PROTOCOL_PRESETS.iter().map(|p| (p.name.to_string(), p.beta0, p.beta1, p.delta0, p.delta1)).collect()
}

#[pyfunction]
fn hidden_count(formula: &str, n_in: usize, n_out: usize) -> PyResult<usize> {
    let f: SizingFormula = formula.parse().map_err(value_err)?;
    Ok(neural::hidden_count(f, n_in, n_out))
}

/// Random mote layout as a JSON string.
#[pyfunction]
fn place_motes(n_hidden: usize, n_output: usize, seed: u64) -> PyResult<String> {
    let layout = topology::place_motes(&mut StreamSeeds::new(seed).rng(Stream::Placement), n_hidden, n_output).map_err(value_err)?;
    Ok(layout.to_json())
}

#[pyfunction]
fn message_complexity(n_iter: u64, train_size: u64, test_size: u64, m_fp: u64) -> u64 {
    engine::analytic_message_complexity(n_iter, train_size, test_size, m_fp)
}

#[pyfunction]
fn time_complexity_hours(n_iter: u64, train_size: u64, test_size: u64, t_wait: f64, per_hop_delay_ms: f64) -> f64 {
    engine::analytic_time_complexity_hours(n_iter, train_size, test_size, t_wait, per_hop_delay_ms)
}

/// Runs an experiment from TOML text and returns the report as JSON.
///
/// A relative `dataset_path` is resolved against `base_dir` when given.
#[pyfunction]
#[pyo3(signature = (config_toml, base_dir=None))]
fn run_experiment(py: Python<'_>, config_toml: &str, base_dir: Option<PathBuf>) -> PyResult<String> {
    let mut cfg = ExperimentConfig::from_toml_str(config_toml).map_err(value_err)?;
    if let Some(dir) = base_dir {
        if cfg.dataset_path.is_relative() {
            cfg.dataset_path = dir.join(&cfg.dataset_path);
        }
    }
    let result = py.detach(|| engine::run_experiment(&cfg)).map_err(|e| PyRuntimeError::new_err(e.to_string()))?;
    Ok(result.report.to_json())
}

/// Replays the scripted link scenario; one line per presentation.
#[pyfunction]
fn replay_trace() -> PyResult<Vec<String>> {
    let steps = trace::replay().map_err(|e| PyRuntimeError::new_err(e.to_string()))?;
    if let Some(m) = trace::compare(&steps) {
        return Err(PyRuntimeError::new_err(format!("trace mismatch: {m}")));
    }
    Ok(steps.iter().map(ToString::to_string).collect())
}

#[pymodule]
fn wsnsim_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyDropModel>()?;
    m.add_class::<PyDelayModel>()?;
    m.add_class::<PyLink>()?;
    m.add_function(wrap_pyfunction!(presets, m)?)?;
    m.add_function(wrap_pyfunction!(hidden_count, m)?)?;
    m.add_function(wrap_pyfunction!(place_motes, m)?)?;
    m.add_function(wrap_pyfunction!(message_complexity, m)?)?;
    m.add_function(wrap_pyfunction!(time_complexity_hours, m)?)?;
    m.add_function(wrap_pyfunction!(run_experiment, m)?)?;
    m.add_function(wrap_pyfunction!(replay_trace, m)?)?;
    Ok(())
}
