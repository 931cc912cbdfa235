//! Python bindings. Matrices cross the boundary as lists of rows.

use std::path::PathBuf;

use ghs_core::archive::{load_chain, save_chain};
use ghs_core::experiment::{run_estimate, run_experiment, scenario_truth, EstimateConfig, ExperimentConfig, Preset};
use ghs_core::metrics::{confusion as confusion_report, frobenius_error as frob, steins_loss as stein};
use ghs_core::report::METRIC_NAMES;
use ghs_core::theory::{shrinkage_bound as bound, BiasCheckInput};
use ghs_core::{Adjacency, Chain, GhsConfig, GhsError, PrecisionMatrix, RngHandle, ScatterMatrix};
use nalgebra::DMatrix;
use pyo3::exceptions::{PyOSError, PyRuntimeError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyDict;

fn err(e: GhsError) -> PyErr {
    match e.exit_code() {
        2 => PyValueError::new_err(e.to_string()),
        4 => PyOSError::new_err(e.to_string()),
        _ => PyRuntimeError::new_err(e.to_string()),
    }
}

fn to_matrix(rows: &[Vec<f64>]) -> PyResult<DMatrix<f64>> {
    let nrows = rows.len();
    let ncols = rows.first().map_or(0, Vec::len);
    if nrows == 0 || ncols == 0 || rows.iter().any(|r| r.len() != ncols) {
        return Err(PyValueError::new_err("expected a non-empty rectangular list of rows"));
    }
    Ok(DMatrix::from_fn(nrows, ncols, |i, j| rows[i][j]))
}

fn to_rows(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    m.row_iter().map(|r| r.iter().copied().collect()).collect()
}

fn sampling(p: usize, burnin: Option<usize>, nmc: usize, thin: usize) -> GhsConfig {
    let mut cfg = GhsConfig::for_dimension(p);
    if let Some(b) = burnin {
        cfg.burnin = b;
    }
    cfg.nmc = nmc;
    cfg.thin = thin;
    cfg
}

/// A finished sampler run.
#[pyclass(name = "Chain", module = "ghs", frozen)]
struct PyChain {
    inner: Chain,
}

#[pymethods]
impl PyChain {
    #[getter]
    fn dim(&self) -> usize {
        self.inner.dim()
    }

    fn __len__(&self) -> usize {
        self.inner.len()
    }

    fn posterior_mean(&self) -> PyResult<Vec<Vec<f64>>> {
        Ok(to_rows(self.inner.posterior_mean().map_err(err)?.as_matrix()))
    }

    /// Draws of entry (i, j).
    fn entry(&self, i: usize, j: usize) -> PyResult<Vec<f64>> {
        let p = self.inner.dim();
        if i >= p || j >= p {
            return Err(PyValueError::new_err(format!("index ({i}, {j}) out of range for p = {p}")));
        }
        Ok(self.inner.entry_samples(i, j))
    }

    /// Pairs `(i, j)`, `i < j`, whose central credible interval excludes 0.
    #[pyo3(signature = (level = 0.5))]
    fn select(&self, level: f64) -> PyResult<Vec<(usize, usize)>> {
        Ok(self.inner.credible_interval_select(level).map_err(err)?.edges())
    }

    fn save(&self, path: PathBuf) -> PyResult<()> {
        save_chain(&self.inner, &path).map_err(err)
    }

    fn __repr__(&self) -> String {
        format!("Chain(p={}, draws={})", self.inner.dim(), self.inner.len())
    }
}

#[pyfunction]
fn load(path: PathBuf) -> PyResult<PyChain> {
    Ok(PyChain {
        inner: load_chain(&path).map_err(err)?,
    })
}

#[pyfunction]
fn presets() -> Vec<&'static str> {
    Preset::ALL.iter().map(|p| p.name()).collect()
}

/// Ω₀ of a preset scenario under `seed`.
#[pyfunction]
#[pyo3(signature = (preset, seed = 0))]
fn truth(preset: &str, seed: u64) -> PyResult<Vec<Vec<f64>>> {
    let mut cfg = ExperimentConfig::from_preset(preset.parse().map_err(err)?);
    cfg.seed = seed;
    Ok(to_rows(scenario_truth(&cfg).map_err(err)?.omega0.as_matrix()))
}

/// Runs the sampler on a scatter matrix `S = YᵀY` from `n` observations.
#[pyfunction]
#[pyo3(signature = (s, n, burnin = None, nmc = 5000, thin = 1, seed = 0, fixed_tau = None))]
#[allow(clippy::too_many_arguments)]
fn sample(
    py: Python<'_>,
    s: Vec<Vec<f64>>,
    n: usize,
    burnin: Option<usize>,
    nmc: usize,
    thin: usize,
    seed: u64,
    fixed_tau: Option<f64>,
) -> PyResult<PyChain> {
    let s = ScatterMatrix::new(to_matrix(&s)?, n).map_err(err)?;
    let mut cfg = sampling(s.dim(), burnin, nmc, thin);
    cfg.fixed_tau = fixed_tau;
    let chain = py
        .detach(|| ghs_core::run_ghs(&s, cfg, RngHandle::new(seed, 0)))
        .map_err(err)?;
    Ok(PyChain { inner: chain })
}

/// Estimates Ω from an `n × p` data matrix.
#[pyfunction]
#[pyo3(signature = (data, burnin = None, nmc = 5000, thin = 1, seed = 0, level = 0.5, center = true, output_dir = None))]
#[allow(clippy::too_many_arguments)]
fn estimate<'py>(
    py: Python<'py>,
    data: Vec<Vec<f64>>,
    burnin: Option<usize>,
    nmc: usize,
    thin: usize,
    seed: u64,
    level: f64,
    center: bool,
    output_dir: Option<PathBuf>,
) -> PyResult<Bound<'py, PyDict>> {
    let y = to_matrix(&data)?;
    let mut cfg = EstimateConfig::new(sampling(y.ncols(), burnin, nmc, thin), seed);
    cfg.selection_level = level;
    cfg.center = center;
    cfg.output_dir = output_dir;
    let out = py.detach(|| run_estimate(y, &cfg)).map_err(err)?;
    let d = PyDict::new(py);
    d.set_item("posterior_mean", to_rows(out.posterior_mean.as_matrix()))?;
    let edges: Vec<(usize, usize, f64, f64)> = out
        .edges
        .iter()
        .map(|e| (e.i, e.j, e.omega, e.partial_correlation))
        .collect();
    d.set_item("edges", edges)?;
    d.set_item("warnings", out.warnings)?;
    d.set_item("chain", PyChain { inner: out.chain })?;
    Ok(d)
}

/// Replicated simulation for a preset; returns per-dataset metrics and the summary.
#[pyfunction]
#[pyo3(signature = (preset, n = None, datasets = 50, burnin = None, nmc = 5000, seed = 0, level = 0.5, threads = None, output_dir = None))]
#[allow(clippy::too_many_arguments)]
fn simulate<'py>(
    py: Python<'py>,
    preset: &str,
    n: Option<usize>,
    datasets: usize,
    burnin: Option<usize>,
    nmc: usize,
    seed: u64,
    level: f64,
    threads: Option<usize>,
    output_dir: Option<PathBuf>,
) -> PyResult<Bound<'py, PyDict>> {
    let preset: Preset = preset.parse().map_err(err)?;
    let mut cfg = ExperimentConfig::from_preset(preset);
    if let Some(n) = n {
        cfg.n = n;
    }
    cfg.num_datasets = datasets;
    cfg.ghs = sampling(preset.dim(), burnin, nmc, 1);
    cfg.seed = seed;
    cfg.selection_level = level;
    cfg.threads = threads;
    cfg.output_dir = output_dir;
    let out = py.detach(|| run_experiment(&cfg)).map_err(err)?;
    let rows = PyDict::new(py);
    let per_dataset: Vec<Vec<f64>> = out.rows().iter().map(|r| r.values().to_vec()).collect();
    for (k, name) in METRIC_NAMES.iter().enumerate() {
        rows.set_item(*name, per_dataset.iter().map(|v| v[k]).collect::<Vec<f64>>())?;
    }
    let mean = PyDict::new(py);
    let sd = PyDict::new(py);
    for (k, name) in METRIC_NAMES.iter().enumerate() {
        mean.set_item(*name, out.summary.mean[k])?;
        sd.set_item(*name, out.summary.sd[k])?;
    }
    let d = PyDict::new(py);
    d.set_item("description", &out.truth.description)?;
    d.set_item("true_edges", out.truth.nonzero_count)?;
    d.set_item("datasets", rows)?;
    d.set_item("mean", mean)?;
    d.set_item("sd", sd)?;
    Ok(d)
}

fn precision(rows: &[Vec<f64>]) -> PyResult<PrecisionMatrix> {
    PrecisionMatrix::new(to_matrix(rows)?).map_err(err)
}

#[pyfunction]
fn steins_loss(estimate: Vec<Vec<f64>>, truth: Vec<Vec<f64>>) -> PyResult<f64> {
    stein(&precision(&estimate)?, &precision(&truth)?).map_err(err)
}

#[pyfunction]
fn frobenius_error(estimate: Vec<Vec<f64>>, truth: Vec<Vec<f64>>) -> PyResult<f64> {
    frob(&precision(&estimate)?, &precision(&truth)?).map_err(err)
}

/// Confusion counts and rates of a selected edge list against the support of `truth`.
#[pyfunction]
fn confusion<'py>(py: Python<'py>, selected: Vec<(usize, usize)>, truth: Vec<Vec<f64>>) -> PyResult<Bound<'py, PyDict>> {
    let t = to_matrix(&truth)?;
    let p = t.nrows();
    let mut sel = Adjacency::empty(p);
    for (i, j) in selected {
        if i >= p || j >= p || i == j {
            return Err(PyValueError::new_err(format!("bad edge ({i}, {j}) for p = {p}")));
        }
        sel.set(i, j, true);
    }
    let c = confusion_report(&sel, &Adjacency::from_support(&t)).map_err(err)?;
    let d = PyDict::new(py);
    d.set_item("tp", c.tp)?;
    d.set_item("fp", c.fp)?;
    d.set_item("tn", c.tn)?;
    d.set_item("fn", c.fn_)?;
    d.set_item("tpr", c.tpr)?;
    d.set_item("fpr", c.fpr)?;
    d.set_item("precision", c.precision)?;
    d.set_item("accuracy", c.accuracy)?;
    Ok(d)
}

/// Upper bound on the relative shrinkage `1 − E(ω′)/ω̂′`.
#[pyfunction]
fn shrinkage_bound(omega_hat_scaled: f64, theta: f64) -> PyResult<f64> {
    bound(&BiasCheckInput::new(omega_hat_scaled, theta)).map_err(err)
}

#[pymodule]
fn ghs(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyChain>()?;
    m.add_function(wrap_pyfunction!(load, m)?)?;
    m.add_function(wrap_pyfunction!(presets, m)?)?;
    m.add_function(wrap_pyfunction!(truth, m)?)?;
    m.add_function(wrap_pyfunction!(sample, m)?)?;
    m.add_function(wrap_pyfunction!(estimate, m)?)?;
    m.add_function(wrap_pyfunction!(simulate, m)?)?;
    m.add_function(wrap_pyfunction!(steins_loss, m)?)?;
    m.add_function(wrap_pyfunction!(frobenius_error, m)?)?;
    m.add_function(wrap_pyfunction!(confusion, m)?)?;
    m.add_function(wrap_pyfunction!(shrinkage_bound, m)?)?;
    Ok(())
}
