//! Python bindings: pipeline stages, a loaded searcher and the ranking
//! metrics.

use std::path::PathBuf;

use pyo3::exceptions::{PyIOError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyDict;

use prodsearch::config::Settings;
use prodsearch::corpus::Split;
use prodsearch::eval::{self, Metrics};
use prodsearch::model::{Model, Variant, MODEL_STEM};
use prodsearch::pipeline;
use prodsearch::synth::Profile;
use prodsearch::Error;

fn to_py(e: Error) -> PyErr {
    match e {
        Error::Io { .. } => PyIOError::new_err(e.to_string()),
        other => PyValueError::new_err(other.to_string()),
    }
}

fn settings(config: Option<&Bound<'_, PyDict>>) -> PyResult<Settings> {
    let mut s = Settings::default();
    if let Some(d) = config {
        for (k, v) in d.iter() {
            let key: String = k.extract()?;
            let value = v.str()?.to_string();
            let value = match value.as_str() {
                "True" => "true".to_string(),
                "False" => "false".to_string(),
                "None" => "none".to_string(),
                _ => value,
            };
            s.set(&key, &value).map_err(to_py)?;
        }
    }
    Ok(s)
}

fn parse<T: std::str::FromStr<Err = Error>>(s: &str) -> PyResult<T> {
    s.parse().map_err(to_py)
}

fn metrics_dict<'py>(py: Python<'py>, m: &Metrics) -> PyResult<Bound<'py, PyDict>> {
    let d = PyDict::new(py);
    d.set_item("hr", m.hr)?;
    d.set_item("mrr", m.mrr)?;
    d.set_item("ndcg", m.ndcg)?;
    d.set_item("instances", m.instances)?;
    Ok(d)
}

/// Writes a synthetic raw corpus; returns the number of users.
#[pyfunction]
#[pyo3(signature = (profile, out, seed=0, users=None))]
fn synth(profile: &str, out: PathBuf, seed: u64, users: Option<usize>) -> PyResult<usize> {
    let truth = pipeline::synth(parse::<Profile>(profile)?, &out, seed, users).map_err(to_py)?;
    Ok(truth.users.len())
}

/// Builds a split corpus directory; returns (users, products, queries).
#[pyfunction]
#[pyo3(signature = (reviews, meta, out, config=None))]
fn preprocess(reviews: PathBuf, meta: PathBuf, out: PathBuf, config: Option<&Bound<'_, PyDict>>) -> PyResult<(usize, usize, usize)> {
    let s = settings(config)?;
    let summary = pipeline::preprocess(&reviews, &meta, &out, &s).map_err(to_py)?;
    let c = summary.counts;
    Ok((c.users, c.products, c.queries))
}

/// Trains embeddings; returns their checksum.
#[pyfunction]
#[pyo3(signature = (corpus, out, config=None))]
fn embed(corpus: PathBuf, out: PathBuf, config: Option<&Bound<'_, PyDict>>) -> PyResult<String> {
    let s = settings(config)?;
    Ok(pipeline::embed(&corpus, &out, &s).map_err(to_py)?.checksum())
}

/// Trains a model; returns the per-epoch mean losses.
#[pyfunction]
#[pyo3(signature = (corpus, embeddings, out, variant="ALSTP", config=None))]
fn train(
    corpus: PathBuf,
    embeddings: PathBuf,
    out: PathBuf,
    variant: &str,
    config: Option<&Bound<'_, PyDict>>,
) -> PyResult<Vec<f64>> {
    let s = settings(config)?;
    let report = pipeline::train(&corpus, &embeddings, &out, parse::<Variant>(variant)?, &s).map_err(to_py)?;
    Ok(report.epochs.iter().map(|e| e.mean_loss).collect())
}

#[pyfunction]
#[pyo3(signature = (corpus, embeddings, model, out, split="test", config=None))]
fn evaluate<'py>(
    py: Python<'py>,
    corpus: PathBuf,
    embeddings: PathBuf,
    model: PathBuf,
    out: PathBuf,
    split: &str,
    config: Option<&Bound<'py, PyDict>>,
) -> PyResult<Bound<'py, PyDict>> {
    let s = settings(config)?;
    let r = pipeline::evaluate(&corpus, &embeddings, &model, &out, parse::<Split>(split)?, &s).map_err(to_py)?;
    metrics_dict(py, &r.metrics)
}

/// Query-likelihood baseline; `lambda_mix` mixes in the user word profile.
#[pyfunction]
#[pyo3(signature = (corpus, out, split="test", lambda_mix=None, config=None))]
fn baseline<'py>(
    py: Python<'py>,
    corpus: PathBuf,
    out: PathBuf,
    split: &str,
    lambda_mix: Option<f64>,
    config: Option<&Bound<'py, PyDict>>,
) -> PyResult<Bound<'py, PyDict>> {
    let s = settings(config)?;
    let r = pipeline::baseline(&corpus, &out, parse::<Split>(split)?, lambda_mix, &s).map_err(to_py)?;
    metrics_dict(py, &r.metrics)
}

#[pyfunction]
fn ndcg(rank: usize, cutoff: usize) -> f64 {
    eval::ndcg_single(rank, cutoff)
}

#[pyfunction]
fn hit_ratio(rank: usize, cutoff: usize) -> f64 {
    eval::hit_ratio(rank, cutoff)
}

#[pyfunction]
fn reciprocal_rank(rank: usize, cutoff: usize) -> f64 {
    eval::reciprocal_rank(rank, cutoff)
}

/// A trained model checkpoint.
#[pyclass(name = "Model", frozen)]
struct PyModel {
    inner: Model,
}

#[pymethods]
impl PyModel {
    #[staticmethod]
    fn load(dir: PathBuf) -> PyResult<Self> {
        let (inner, _, _) = Model::load(&dir, MODEL_STEM).map_err(to_py)?;
        Ok(PyModel { inner })
    }

    #[getter]
    fn variant(&self) -> &'static str {
        self.inner.variant.name()
    }

    #[getter]
    fn k(&self) -> usize {
        self.inner.config.k
    }

    #[getter]
    fn m(&self) -> usize {
        self.inner.config.m
    }

    #[getter]
    fn beta(&self) -> f64 {
        self.inner.config.beta
    }

    fn parameter_count(&self) -> usize {
        self.inner.params.count()
    }

    fn checksum(&self) -> String {
        self.inner.checksum()
    }

    fn __repr__(&self) -> String {
        format!("Model(variant={}, k={}, m={})", self.inner.variant, self.inner.config.k, self.inner.config.m)
    }
}

/// Corpus, embeddings and model loaded once for repeated queries.
#[pyclass(name = "Searcher", frozen)]
struct PySearcher {
    inner: pipeline::Searcher,
}

#[pymethods]
impl PySearcher {
    #[new]
    fn new(corpus: PathBuf, embeddings: PathBuf, model: PathBuf) -> PyResult<Self> {
        let inner = pipeline::Searcher::open(&corpus, &embeddings, &model).map_err(to_py)?;
        Ok(PySearcher { inner })
    }

    /// Top products as (product id, score) pairs.
    #[pyo3(signature = (user, query, top=20))]
    fn search(&self, user: &str, query: &str, top: usize) -> PyResult<Vec<(String, f64)>> {
        let hits = self.inner.search(user, query, top).map_err(to_py)?;
        Ok(hits.into_iter().map(|h| (h.product, h.score)).collect())
    }

    #[getter]
    fn users(&self) -> Vec<String> {
        self.inner.corpus.users.iter().map(|u| u.user_id.clone()).collect()
    }

    #[getter]
    fn products(&self) -> Vec<String> {
        self.inner.corpus.products.clone()
    }

    #[getter]
    fn model(&self) -> PyModel {
        PyModel { inner: self.inner.model.clone() }
    }
}

/// Adds every function and class to `m`.
pub fn register(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_function(wrap_pyfunction!(synth, m)?)?;
    m.add_function(wrap_pyfunction!(preprocess, m)?)?;
    m.add_function(wrap_pyfunction!(embed, m)?)?;
    m.add_function(wrap_pyfunction!(train, m)?)?;
    m.add_function(wrap_pyfunction!(evaluate, m)?)?;
    m.add_function(wrap_pyfunction!(baseline, m)?)?;
    m.add_function(wrap_pyfunction!(ndcg, m)?)?;
    m.add_function(wrap_pyfunction!(hit_ratio, m)?)?;
    m.add_function(wrap_pyfunction!(reciprocal_rank, m)?)?;
    m.add_class::<PyModel>()?;
    m.add_class::<PySearcher>()?;
    Ok(())
}

#[pymodule]
fn prodsearch_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    register(m)
}
