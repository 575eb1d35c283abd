//! Python bindings for the `blindgain` simulator.

use pyo3::exceptions::{PyIOError, PyIndexError, PyValueError};
use pyo3::prelude::*;

use blindgain::analysis;
use blindgain::estimators;
use blindgain::harness::{self, SystemConfig};
use blindgain::precoder;
use blindgain::{ChannelModel, ChannelRealization, Complex64, Error, LargeScaleProfile, SeedTree};

fn to_py(e: Error) -> PyErr {
    match e {
        Error::UserIndex { .. } => PyIndexError::new_err(e.to_string()),
        e if e.is_io() => PyIOError::new_err(e.to_string()),
        e => PyValueError::new_err(e.to_string()),
    }
}

fn parse_model(name: &str) -> PyResult<ChannelModel> {
    name.parse().map_err(to_py)
}

fn profile(betas: Vec<f64>) -> PyResult<LargeScaleProfile> {
    LargeScaleProfile::new(betas).map_err(to_py)
}

/// One channel draw `G` (M × K) for a given model and large-scale profile.
///
/// The draw is a pure function of `(model, M, betas, seed, trial)`.
#[pyclass(name = "Channel", module = "blindgain_py", frozen)]
struct PyChannel {
    inner: ChannelRealization,
    profile: LargeScaleProfile,
}

#[pymethods]
impl PyChannel {
    #[new]
    #[pyo3(signature = (model, antennas, betas, seed, trial = 0))]
    fn new(model: &str, antennas: usize, betas: Vec<f64>, seed: u64, trial: u64) -> PyResult<Self> {
        let model = parse_model(model)?;
        let profile = profile(betas)?;
        let mut rng = SeedTree::new(seed).stream(trial);
        let inner = blindgain::channel::generate(model, antennas, &profile, &mut rng).map_err(to_py)?;
        Ok(PyChannel { inner, profile })
    }

    #[getter]
    fn model(&self) -> &'static str {
        self.inner.model().as_str()
    }

    #[getter]
    fn num_antennas(&self) -> usize {
        self.inner.num_antennas()
    }

    #[getter]
    fn num_users(&self) -> usize {
        self.inner.num_users()
    }

    #[getter]
    fn betas(&self) -> Vec<f64> {
        self.profile.betas().to_vec()
    }

    /// Column `k` of `G`.
    fn column(&self, k: usize) -> PyResult<Vec<Complex64>> {
        if k >= self.inner.num_users() {
            return Err(PyIndexError::new_err(format!("user {k} out of range")));
        }
        Ok(self.inner.column(k).to_vec())
    }

    /// The Gram matrix `GᴴG` as nested lists.
    fn gram(&self) -> Vec<Vec<Complex64>> {
        let gram = self.inner.gram();
        (0..gram.num_users()).map(|i| gram.row(i).to_vec()).collect()
    }

    /// `‖g_k‖²`.
    fn effective_gain(&self, k: usize) -> PyResult<f64> {
        blindgain::channel::effective_gain(&self.inner, k).map_err(to_py)
    }

    /// Received power of user `k` at total transmit power `rho`.
    fn exact_power(&self, rho: f64, k: usize) -> PyResult<f64> {
        let state = self.precoder(rho)?;
        analysis::exact_power(&self.inner, &state, k).map_err(to_py)
    }

    /// `ε_k`.
    fn epsilon(&self, k: usize) -> PyResult<f64> {
        analysis::epsilon_k(&self.inner, &self.profile, k).map_err(to_py)
    }

    /// Blind estimate of `‖g_k‖²` from the exact received power.
    /// Returns `(estimate, clamped)`.
    fn blind_estimate(&self, rho: f64, k: usize) -> PyResult<(f64, bool)> {
        let state = self.precoder(rho)?;
        let xi = analysis::exact_power(&self.inner, &state, k).map_err(to_py)?;
        let bar = self.profile.sum_excluding(k).map_err(to_py)?;
        let est = estimators::blind_estimate(xi, state.alpha(), bar).map_err(to_py)?;
        Ok((est.value, est.clamped))
    }

    /// `x = √α G s` for one slot of `K` symbols.
    fn precode(&self, symbols: Vec<Complex64>, rho: f64) -> PyResult<Vec<Complex64>> {
        let state = self.precoder(rho)?;
        precoder::precode(&self.inner, &symbols, &state).map_err(to_py)
    }

    fn __repr__(&self) -> String {
        format!(
            "Channel(model='{}', M={}, K={})",
            self.inner.model(),
            self.inner.num_antennas(),
            self.inner.num_users()
        )
    }
}

impl PyChannel {
    fn precoder(&self, rho: f64) -> PyResult<precoder::PrecoderState> {
        precoder::normalization_alpha(rho, self.inner.num_antennas(), &self.profile).map_err(to_py)
    }
}

/// `α = ρ / (M Σβ)`.
#[pyfunction]
fn normalization_alpha(rho: f64, antennas: usize, betas: Vec<f64>) -> PyResult<f64> {
    let state = precoder::normalization_alpha(rho, antennas, &profile(betas)?).map_err(to_py)?;
    Ok(state.alpha())
}

/// Nonnegative root of `ξ = α a² + α β̄ a + 1`; returns `(estimate, clamped)`.
#[pyfunction]
fn blind_estimate(xi: f64, alpha: f64, sum_beta_others: f64) -> PyResult<(f64, bool)> {
    let est = estimators::blind_estimate(xi, alpha, sum_beta_others).map_err(to_py)?;
    Ok((est.value, est.clamped))
}

#[pyfunction]
fn statistical_estimate(antennas: usize, beta: f64) -> f64 {
    estimators::statistical_estimate(antennas, beta)
}

/// `(E‖g‖², E‖g‖⁴, Var‖g‖²)`.
#[pyfunction]
#[pyo3(signature = (model, antennas, beta = 1.0))]
fn moments(model: &str, antennas: usize, beta: f64) -> PyResult<(f64, f64, f64)> {
    let m = analysis::moments(parse_model(model)?, antennas, beta).map_err(to_py)?;
    Ok((m.mean_gain, m.fourth, m.variance))
}

#[pyfunction]
#[pyo3(signature = (model, antennas, betas, k = 0))]
fn varrho_closed_form(model: &str, antennas: usize, betas: Vec<f64>, k: usize) -> PyResult<f64> {
    analysis::varrho_closed_form(parse_model(model)?, antennas, &profile(betas)?, k).map_err(to_py)
}

/// Monte Carlo accuracy metric; returns `(mean, stderr)`.
#[pyfunction]
#[pyo3(signature = (model, antennas, betas, k = 0, trials = 10_000, seed = 1))]
fn varrho_monte_carlo(
    py: Python<'_>,
    model: &str,
    antennas: usize,
    betas: Vec<f64>,
    k: usize,
    trials: usize,
    seed: u64,
) -> PyResult<(f64, f64)> {
    let model = parse_model(model)?;
    let profile = profile(betas)?;
    let est = py
        .detach(|| analysis::varrho_monte_carlo(model, antennas, &profile, k, trials, seed))
        .map_err(to_py)?;
    Ok((est.mean, est.stderr))
}

/// Normalized MSE over `(estimate, truth)` pairs; returns `(mean, stderr)`.
#[pyfunction]
fn normalized_mse(pairs: Vec<(f64, f64)>, mean_gain: f64) -> PyResult<(f64, f64)> {
    let est = analysis::normalized_mse(&pairs, mean_gain).map_err(to_py)?;
    Ok((est.mean, est.stderr))
}

/// The default sweep configuration as JSON.
#[pyfunction]
fn default_config() -> String {
    serde_json::to_string_pretty(&SystemConfig::default()).expect("config serializes")
}

fn sweep(py: Python<'_>, config_json: &str, workers: Option<usize>) -> PyResult<harness::ResultsTable> {
    let config = SystemConfig::from_json_str(config_json).map_err(to_py)?;
    py.detach(|| harness::with_workers(workers, || harness::run_experiment(&config)))
        .and_then(|r| r)
        .map_err(to_py)
}

/// Run a sweep from a JSON config and return the results as CSV text.
#[pyfunction]
#[pyo3(signature = (config_json, workers = None))]
fn run_sweep(py: Python<'_>, config_json: &str, workers: Option<usize>) -> PyResult<String> {
    Ok(sweep(py, config_json, workers)?.to_csv_string())
}

/// Run a sweep and return the results table as JSON text.
#[pyfunction]
#[pyo3(signature = (config_json, workers = None))]
fn run_sweep_json(py: Python<'_>, config_json: &str, workers: Option<usize>) -> PyResult<String> {
    let table = sweep(py, config_json, workers)?;
    Ok(serde_json::to_string(&table).expect("table serializes"))
}

#[pymodule]
pub fn blindgain_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyChannel>()?;
    m.add_function(wrap_pyfunction!(normalization_alpha, m)?)?;
    m.add_function(wrap_pyfunction!(blind_estimate, m)?)?;
    m.add_function(wrap_pyfunction!(statistical_estimate, m)?)?;
    m.add_function(wrap_pyfunction!(moments, m)?)?;
    m.add_function(wrap_pyfunction!(varrho_closed_form, m)?)?;
    m.add_function(wrap_pyfunction!(varrho_monte_carlo, m)?)?;
    m.add_function(wrap_pyfunction!(normalized_mse, m)?)?;
    m.add_function(wrap_pyfunction!(default_config, m)?)?;
    m.add_function(wrap_pyfunction!(run_sweep, m)?)?;
    m.add_function(wrap_pyfunction!(run_sweep_json, m)?)?;
    m.add("CSV_HEADER", harness::CSV_HEADER.join(","))?;
    Ok(())
}
