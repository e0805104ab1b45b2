//! Python bindings: the census types plus every study, returning plain
//! dicts and lists.

use std::collections::BTreeMap;
use std::path::PathBuf;

use pyo3::exceptions::PyValueError;
use pyo3::prelude::*;
use serde::Serialize;

use qcaudit::biastest::{self, DiffSeries, SignTestOptions};
use qcaudit::census::{self as core_census, ContenderSchema, SynthSpec};
use qcaudit::estimator::HalfWidths;
use qcaudit::montecarlo::{self, CoverageOptions, RunConfig};
use qcaudit::{estimator, sampler, statskit};

fn err(e: impl std::fmt::Display) -> PyErr {
    PyValueError::new_err(e.to_string())
}

fn to_py<'py>(py: Python<'py>, value: &impl Serialize) -> PyResult<Bound<'py, PyAny>> {
    let text = serde_json::to_string(value).map_err(err)?;
    py.import("json")?.call_method1("loads", (text,))
}

#[pyclass(frozen, module = "qcaudit")]
struct Census {
    inner: core_census::Census,
}

#[pymethods]
impl Census {
    /// Load a census CSV; contenders come from `schema` or the header.
    #[staticmethod]
    #[pyo3(signature = (path, schema=None))]
    fn load(path: PathBuf, schema: Option<PathBuf>) -> PyResult<Self> {
        let schema = match schema {
            Some(s) => core_census::load_schema(s).map_err(err)?,
            None => {
                let mut rdr = csv_header(&path)?;
                let ids: Vec<_> = rdr.drain(..).skip(3).map(core_census::Contender::candidate).collect();
                ContenderSchema::new(ids).map_err(err)?
            }
        };
        Ok(Census { inner: core_census::load_census(path, &schema).map_err(err)? })
    }

    #[staticmethod]
    #[pyo3(signature = (n_strata, casillas_per_stratum, profile, seed, dispersion=0.2))]
    fn synth(n_strata: usize, casillas_per_stratum: usize, profile: Vec<f64>, seed: u64, dispersion: f64) -> PyResult<Self> {
        let spec = SynthSpec { dispersion, ..SynthSpec::new(n_strata, casillas_per_stratum, profile, seed) };
        Ok(Census { inner: core_census::synth_election(&spec).map_err(err)? })
    }

    fn save(&self, path: PathBuf) -> PyResult<()> {
        core_census::write_census(&self.inner, path).map_err(err)
    }

    #[getter]
    fn num_casillas(&self) -> usize {
        self.inner.num_casillas()
    }

    #[getter]
    fn num_strata(&self) -> usize {
        self.inner.strata().len()
    }

    #[getter]
    fn contender_ids(&self) -> Vec<String> {
        self.inner.contender_ids().map(String::from).collect()
    }

    #[getter]
    fn true_shares(&self) -> BTreeMap<String, f64> {
        self.inner.contender_ids().map(String::from).zip(self.inner.true_shares()).collect()
    }

    #[getter]
    fn true_participation(&self) -> Option<f64> {
        self.inner.true_participation()
    }

    fn validate<'py>(&self, py: Python<'py>) -> PyResult<Bound<'py, PyAny>> {
        to_py(py, &self.inner.validate())
    }

    fn __len__(&self) -> usize {
        self.inner.num_casillas()
    }

    fn __repr__(&self) -> String {
        format!(
            "Census({} casillas, {} strata, contenders {:?})",
            self.inner.num_casillas(),
            self.inner.strata().len(),
            self.contender_ids()
        )
    }
}

fn csv_header(path: &PathBuf) -> PyResult<Vec<String>> {
    let text = std::fs::read_to_string(path).map_err(|e| err(format!("{}: {e}", path.display())))?;
    let first = text.lines().next().unwrap_or_default();
    Ok(first.split(',').map(|s| s.trim().to_string()).collect())
}

#[pyclass(frozen, module = "qcaudit")]
struct ReceivedSample {
    inner: core_census::ReceivedSample,
}

#[pymethods]
impl ReceivedSample {
    #[staticmethod]
    fn load(path: PathBuf, census: &Census) -> PyResult<Self> {
        Ok(ReceivedSample { inner: core_census::load_received(path, &census.inner).map_err(err)? })
    }

    /// Census rows for the given casillas, as if received without errors.
    #[staticmethod]
    fn from_census(census: &Census, casilla_ids: Vec<String>) -> PyResult<Self> {
        let ids: Vec<&str> = casilla_ids.iter().map(String::as_str).collect();
        Ok(ReceivedSample { inner: core_census::ReceivedSample::from_census(&census.inner, &ids).map_err(err)? })
    }

    fn __len__(&self) -> usize {
        self.inner.len()
    }
}

fn run_config(replicates: usize, seed: u64, workers: Option<usize>) -> RunConfig {
    RunConfig { replicates, seed, workers }
}

#[pyfunction]
fn proportional_allocation<'py>(py: Python<'py>, census: &Census, c: usize) -> PyResult<Bound<'py, PyAny>> {
    to_py(py, &sampler::proportional_allocation(&census.inner, c).map_err(err)?)
}

#[pyfunction]
#[pyo3(signature = (census, c, seed, draw_index=0))]
fn draw<'py>(py: Python<'py>, census: &Census, c: usize, seed: u64, draw_index: u64) -> PyResult<Bound<'py, PyAny>> {
    let alloc = sampler::proportional_allocation(&census.inner, c).map_err(err)?;
    to_py(py, &sampler::draw(&census.inner, &alloc, seed, draw_index))
}

/// `sample` maps casilla_id to its vote counts in contender order.
#[pyfunction]
fn ratio_estimate<'py>(py: Python<'py>, census: &Census, sample: BTreeMap<String, Vec<u64>>) -> PyResult<Bound<'py, PyAny>> {
    let est = estimator::ratio_estimate(&census.inner, sample.iter().map(|(k, v)| (k.as_str(), v.as_slice())))
        .map_err(err)?;
    to_py(py, &est)
}

#[pyfunction]
#[pyo3(signature = (census, c, replicates=100_000, seed=0, target_margin=0.005, quantile=0.95, workers=None))]
#[allow(clippy::too_many_arguments)]
fn precision_study<'py>(
    py: Python<'py>,
    census: &Census,
    c: usize,
    replicates: usize,
    seed: u64,
    target_margin: f64,
    quantile: f64,
    workers: Option<usize>,
) -> PyResult<Bound<'py, PyAny>> {
    let run = run_config(replicates, seed, workers);
    let rep = py.detach(|| montecarlo::precision_study(&census.inner, c, target_margin, quantile, &run)).map_err(err)?;
    to_py(py, &rep)
}

/// Half-widths are fractions keyed by contender id (and "participation").
#[pyfunction]
#[pyo3(signature = (census, c, half_widths, replicates=100_000, seed=0, confidence=0.95, include_participation=true, workers=None))]
#[allow(clippy::too_many_arguments)]
fn coverage_study<'py>(
    py: Python<'py>,
    census: &Census,
    c: usize,
    half_widths: HalfWidths,
    replicates: usize,
    seed: u64,
    confidence: f64,
    include_participation: bool,
    workers: Option<usize>,
) -> PyResult<Bound<'py, PyAny>> {
    let run = run_config(replicates, seed, workers);
    let opts = CoverageOptions { confidence, include_participation };
    let rep = py.detach(|| montecarlo::coverage_study(&census.inner, c, &half_widths, &opts, &run)).map_err(err)?;
    to_py(py, &rep)
}

#[pyfunction]
#[pyo3(signature = (census, leader, runner_up, c, replicates=100_000, seed=0, bins=60, workers=None))]
#[allow(clippy::too_many_arguments)]
fn winner_gap_study<'py>(
    py: Python<'py>,
    census: &Census,
    leader: &str,
    runner_up: &str,
    c: usize,
    replicates: usize,
    seed: u64,
    bins: usize,
    workers: Option<usize>,
) -> PyResult<Bound<'py, PyAny>> {
    let run = run_config(replicates, seed, workers);
    let rep = py
        .detach(|| montecarlo::winner_gap_study(&census.inner, leader, runner_up, c, bins, &run))
        .map_err(err)?;
    to_py(py, &rep)
}

#[pyfunction]
#[pyo3(signature = (d, replicates=100_000, seed=0, exhaustive=false))]
fn sign_test<'py>(py: Python<'py>, d: Vec<i64>, replicates: usize, seed: u64, exhaustive: bool) -> PyResult<Bound<'py, PyAny>> {
    let series = DiffSeries::new("d", d);
    let opts = SignTestOptions { exhaustive, ..SignTestOptions::new(replicates, seed) };
    let res = py.detach(|| biastest::sign_test(&series, &opts)).map_err(err)?;
    to_py(py, &res)
}

/// Differences and the descriptive table for a received sample.
#[pyfunction]
fn bias_table<'py>(py: Python<'py>, received: &ReceivedSample, census: &Census) -> PyResult<Bound<'py, PyAny>> {
    let diffs = biastest::compute_differences(&received.inner, &census.inner).map_err(err)?;
    to_py(py, &biastest::bias_table(&diffs))
}

#[pyfunction]
#[pyo3(signature = (received, census, half_widths, confidence=0.95))]
fn corrected_intervals<'py>(
    py: Python<'py>,
    received: &ReceivedSample,
    census: &Census,
    half_widths: HalfWidths,
    confidence: f64,
) -> PyResult<Bound<'py, PyAny>> {
    let rep = biastest::corrected_intervals(&received.inner, &census.inner, &half_widths, confidence).map_err(err)?;
    to_py(py, &rep)
}

#[pyfunction]
fn binomial_pmf(r: u32, p: f64, x: u32) -> PyResult<f64> {
    statskit::binomial_pmf(r, p, x).map_err(err)
}

#[pyfunction]
fn binomial_tail_ge(r: u32, p: f64, x: u32) -> PyResult<f64> {
    statskit::binomial_tail_ge(r, p, x).map_err(err)
}

#[pyfunction]
fn normal_upper_tail(z: f64) -> f64 {
    statskit::normal_upper_tail(z)
}

#[pyfunction]
fn empirical_quantile(values: Vec<f64>, q: f64) -> PyResult<f64> {
    statskit::empirical_quantile(&values, q).map_err(err)
}

#[pyfunction]
fn shapiro_wilk<'py>(py: Python<'py>, values: Vec<f64>) -> PyResult<Bound<'py, PyAny>> {
    to_py(py, &statskit::shapiro_wilk(&values).map_err(err)?)
}

#[pymodule]
fn qcaudit_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<Census>()?;
    m.add_class::<ReceivedSample>()?;
    m.add_function(wrap_pyfunction!(proportional_allocation, m)?)?;
    m.add_function(wrap_pyfunction!(draw, m)?)?;
    m.add_function(wrap_pyfunction!(ratio_estimate, m)?)?;
    m.add_function(wrap_pyfunction!(precision_study, m)?)?;
    m.add_function(wrap_pyfunction!(coverage_study, m)?)?;
    m.add_function(wrap_pyfunction!(winner_gap_study, m)?)?;
    m.add_function(wrap_pyfunction!(sign_test, m)?)?;
    m.add_function(wrap_pyfunction!(bias_table, m)?)?;
    m.add_function(wrap_pyfunction!(corrected_intervals, m)?)?;
    m.add_function(wrap_pyfunction!(binomial_pmf, m)?)?;
    m.add_function(wrap_pyfunction!(binomial_tail_ge, m)?)?;
    m.add_function(wrap_pyfunction!(normal_upper_tail, m)?)?;
    m.add_function(wrap_pyfunction!(empirical_quantile, m)?)?;
    m.add_function(wrap_pyfunction!(shapiro_wilk, m)?)?;
    Ok(())
}
