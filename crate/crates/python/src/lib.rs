//! Python bindings for `innovbench_core`.

use std::path::PathBuf;

use innovbench_core::dist::{coarsen, level_set_partition, miscalibration, tv_distance};
use innovbench_core::measures::{self, clopper_pearson};
use innovbench_core::models::{self, ModelKind};
use innovbench_core::rng::seeded;
use innovbench_core::textlab::{self, NgramModel};
use innovbench_core::verify::{self, Theorem};
use innovbench_core::worlds::{self, regularity_ratio};
use innovbench_core::{Corpus, Dist, EmbeddingTable, Error, MetaSpec, Model, Partition, Posterior, World};
use pyo3::exceptions::{PyOSError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyDict;

fn err(e: Error) -> PyErr {
    match e {
        Error::Io { .. } => PyOSError::new_err(e.to_string()),
        other => PyValueError::new_err(other.to_string()),
    }
}

fn model_kind(spec: &str) -> PyResult<ModelKind> {
    let json = if spec.trim_start().starts_with('{') {
        spec.to_string()
    } else {
        format!("{{\"kind\":{}}}", serde_json::Value::String(spec.into()))
    };
    serde_json::from_str(&json).map_err(|e| PyValueError::new_err(format!("model kind `{spec}`: {e}")))
}

#[pyclass(name = "Dist", module = "innovbench", frozen)]
struct PyDist(Dist);

#[pymethods]
impl PyDist {
    #[new]
    fn new(mass: Vec<f64>) -> PyResult<Self> {
        Dist::new(mass).map(PyDist).map_err(err)
    }

    #[staticmethod]
    fn uniform(n: usize) -> PyResult<Self> {
        Dist::uniform(n).map(PyDist).map_err(err)
    }

    #[staticmethod]
    fn from_weights(weights: Vec<f64>) -> PyResult<Self> {
        Dist::from_weights(&weights).map(PyDist).map_err(err)
    }

    #[getter]
    fn mass(&self) -> Vec<f64> {
        self.0.mass().to_vec()
    }

    fn support(&self) -> Vec<usize> {
        self.0.support()
    }

    fn mass_on(&self, ids: Vec<usize>) -> PyResult<f64> {
        self.0.mass_on(&ids).map_err(err)
    }

    fn __len__(&self) -> usize {
        self.0.len()
    }

    fn __repr__(&self) -> String {
        format!("Dist({:?})", self.0.mass())
    }
}

#[pyclass(name = "Partition", module = "innovbench", frozen)]
struct PyPartition(Partition);

#[pymethods]
impl PyPartition {
    /// `labels[y]` is the cell of statement `y`.
    #[new]
    fn new(labels: Vec<usize>) -> PyResult<Self> {
        Partition::from_labels(labels).map(PyPartition).map_err(err)
    }

    #[staticmethod]
    fn singletons(n: usize) -> PyResult<Self> {
        Partition::singletons(n).map(PyPartition).map_err(err)
    }

    #[staticmethod]
    fn single_cell(n: usize) -> PyResult<Self> {
        Partition::single_cell(n).map(PyPartition).map_err(err)
    }

    #[getter]
    fn n_cells(&self) -> usize {
        self.0.n_cells()
    }

    fn cells(&self) -> Vec<Vec<usize>> {
        self.0.cells()
    }

    fn __len__(&self) -> usize {
        self.0.len()
    }
}

#[pyclass(name = "Corpus", module = "innovbench", frozen)]
struct PyCorpus(Corpus);

#[pymethods]
impl PyCorpus {
    #[new]
    fn new(counts: Vec<u64>) -> PyResult<Self> {
        Corpus::from_counts(counts).map(PyCorpus).map_err(err)
    }

    #[staticmethod]
    fn from_draws(n_statements: usize, draws: Vec<usize>) -> PyResult<Self> {
        Corpus::from_draws(n_statements, &draws).map(PyCorpus).map_err(err)
    }

    #[getter]
    fn n(&self) -> u64 {
        self.0.n()
    }

    #[getter]
    fn counts(&self) -> Vec<u64> {
        self.0.counts().to_vec()
    }

    fn observed(&self) -> Vec<usize> {
        self.0.observed()
    }

    fn unseen(&self) -> Vec<usize> {
        self.0.unseen()
    }

    fn singletons(&self) -> usize {
        self.0.singletons()
    }
}

#[pyclass(name = "MetaSpec", module = "innovbench", frozen)]
struct PyMetaSpec(MetaSpec);

#[pymethods]
impl PyMetaSpec {
    #[staticmethod]
    fn uniform_k(n_statements: usize, k_max: usize) -> PyResult<Self> {
        MetaSpec::uniform_k(n_statements, k_max).map(PyMetaSpec).map_err(err)
    }

    #[staticmethod]
    fn two_class(n_statements: usize, k_max: usize, rho: f64) -> PyResult<Self> {
        MetaSpec::two_class(n_statements, k_max, rho).map(PyMetaSpec).map_err(err)
    }

    #[staticmethod]
    fn from_json(text: &str) -> PyResult<Self> {
        serde_json::from_str(text)
            .map(PyMetaSpec)
            .map_err(|e| PyValueError::new_err(e.to_string()))
    }

    fn to_json(&self) -> PyResult<String> {
        serde_json::to_string(&self.0).map_err(|e| PyValueError::new_err(e.to_string()))
    }

    #[getter]
    fn n_statements(&self) -> usize {
        self.0.n_statements
    }

    #[getter]
    fn k_max(&self) -> usize {
        self.0.k_max
    }

    fn sample_world(&self, seed: u64) -> PyWorld {
        PyWorld(worlds::sample_world(&self.0, &mut seeded(seed)))
    }

    /// Exact posterior over worlds given the corpus.
    fn posterior(&self, corpus: &PyCorpus) -> PyResult<PyPosterior> {
        worlds::exact_posterior(&self.0, &corpus.0).map(PyPosterior).map_err(err)
    }
}

#[pyclass(name = "World", module = "innovbench", frozen)]
struct PyWorld(World);

#[pymethods]
impl PyWorld {
    #[new]
    fn new(dist: &PyDist) -> Self {
        PyWorld(World::from_dist(dist.0.clone()))
    }

    #[getter]
    fn dist(&self) -> PyDist {
        PyDist(self.0.dist().clone())
    }

    fn facts(&self) -> Vec<usize> {
        self.0.facts().to_vec()
    }

    fn hallucinations(&self) -> Vec<usize> {
        self.0.hallucinations()
    }

    fn sample_corpus(&self, n: u64, seed: u64) -> PyResult<PyCorpus> {
        worlds::sample_corpus(&self.0, n, &mut seeded(seed)).map(PyCorpus).map_err(err)
    }
}

#[pyclass(name = "Posterior", module = "innovbench", frozen)]
struct PyPosterior(Posterior);

#[pymethods]
impl PyPosterior {
    fn fact_marginals(&self) -> Vec<f64> {
        self.0.fact_marginals().to_vec()
    }

    fn expected_fu(&self) -> f64 {
        self.0.expected_fu()
    }

    fn n_candidates(&self) -> usize {
        self.0.n_candidates()
    }

    fn regularity(&self) -> PyResult<f64> {
        regularity_ratio(&self.0).map(|r| r.r).map_err(err)
    }

    fn prob_hallucinate(&self, g: &PyDist) -> PyResult<f64> {
        worlds::prob_hallucinate(&g.0, &self.0).map_err(err)
    }

    fn expected_hallucination(&self, g: &PyDist) -> PyResult<f64> {
        worlds::expected_hallucination(&g.0, &self.0).map_err(err)
    }
}

#[pyclass(name = "Model", module = "innovbench", frozen)]
struct PyModel(Model);

#[pymethods]
impl PyModel {
    /// `kind` is a name (`"empirical"`, `"random"`) or a JSON object such as
    /// `{"kind": "spike", "beta": 0.5}`.
    #[staticmethod]
    fn build(kind: &str, world: &PyWorld, corpus: &PyCorpus, seed: u64) -> PyResult<Self> {
        model_kind(kind)?
            .build(&world.0, &corpus.0, &mut seeded(seed))
            .map(PyModel)
            .map_err(err)
    }

    #[staticmethod]
    fn empirical(corpus: &PyCorpus) -> PyResult<Self> {
        models::empirical_model(&corpus.0).map(PyModel).map_err(err)
    }

    #[staticmethod]
    fn calibrated(world: &PyWorld, partition: &PyPartition) -> PyResult<Self> {
        models::calibrated_model(&world.0, &partition.0).map(PyModel).map_err(err)
    }

    #[getter]
    fn dist(&self) -> PyDist {
        PyDist(self.0.dist.clone())
    }

    #[getter]
    fn provenance(&self) -> String {
        self.0.provenance.clone()
    }
}

#[pyclass(name = "EmbeddingTable", module = "innovbench", frozen)]
struct PyEmbeddingTable(EmbeddingTable);

#[pymethods]
impl PyEmbeddingTable {
    #[new]
    fn new(rows: Vec<Vec<f32>>) -> PyResult<Self> {
        EmbeddingTable::from_rows(&rows).map(PyEmbeddingTable).map_err(err)
    }

    #[staticmethod]
    fn load(path: PathBuf) -> PyResult<Self> {
        EmbeddingTable::load(&path).map(PyEmbeddingTable).map_err(err)
    }

    fn save(&self, path: PathBuf) -> PyResult<()> {
        self.0.save(&path).map_err(err)
    }

    #[getter]
    fn count(&self) -> usize {
        self.0.count()
    }

    #[getter]
    fn dim(&self) -> usize {
        self.0.dim()
    }

    fn row(&self, i: usize) -> PyResult<Vec<f32>> {
        if i >= self.0.count() {
            return Err(PyValueError::new_err(format!("row {i} out of range")));
        }
        Ok(self.0.row(i).to_vec())
    }

    fn semantic_innovation_rate(&self, training: &PyEmbeddingTable, threshold: f64) -> PyResult<f64> {
        measures::semantic_innovation_rate(&self.0, &training.0, threshold).map_err(err)
    }
}

#[pyclass(name = "NgramModel", module = "innovbench", frozen)]
struct PyNgramModel(NgramModel);

#[pymethods]
impl PyNgramModel {
    /// Trains on raw sentences after the standard preprocessing.
    #[new]
    fn new(sentences: Vec<String>, n: usize) -> PyResult<Self> {
        let prepared: Vec<_> = sentences.iter().filter_map(|s| textlab::preprocess(s)).collect();
        textlab::train_ngram(&prepared, n).map(PyNgramModel).map_err(err)
    }

    #[getter]
    fn order(&self) -> usize {
        self.0.order()
    }

    #[getter]
    fn vocab_size(&self) -> usize {
        self.0.vocab_size()
    }

    fn prob(&self, context: Vec<String>, next: &str) -> Option<f64> {
        let ctx: Vec<&str> = context.iter().map(String::as_str).collect();
        self.0.prob(&ctx, next)
    }

    #[pyo3(signature = (count, seed, max_len = textlab::MAX_SENTENCE_TOKENS))]
    fn generate(&self, count: usize, seed: u64, max_len: usize) -> Vec<String> {
        textlab::generate_many(&self.0, count, max_len, seed)
            .into_iter()
            .map(|s| s.raw)
            .collect()
    }
}

#[pyfunction]
fn preprocess(text: &str) -> Option<Vec<String>> {
    textlab::preprocess(text).map(|s| s.tokens)
}

#[pyfunction(name = "coarsen")]
fn py_coarsen(p: &PyDist, partition: &PyPartition) -> PyResult<PyDist> {
    coarsen(&p.0, &partition.0).map(PyDist).map_err(err)
}

#[pyfunction(name = "tv_distance")]
fn py_tv_distance(p: &PyDist, q: &PyDist) -> PyResult<f64> {
    tv_distance(&p.0, &q.0).map_err(err)
}

#[pyfunction(name = "miscalibration")]
fn py_miscalibration(g: &PyDist, p: &PyDist) -> PyResult<f64> {
    miscalibration(&g.0, &p.0).map_err(err)
}

#[pyfunction(name = "level_set_partition")]
fn py_level_set_partition(g: &PyDist) -> PyPartition {
    PyPartition(level_set_partition(&g.0))
}

#[pyfunction]
fn innovation_rate(g: &PyModel, corpus: &PyCorpus) -> PyResult<f64> {
    measures::innovation_rate(&g.0, &corpus.0).map_err(err)
}

#[pyfunction]
fn hallucination_rate(g: &PyModel, world: &PyWorld) -> PyResult<f64> {
    measures::hallucination_rate(&g.0, &world.0).map_err(err)
}

#[pyfunction]
fn missing_mass(world: &PyWorld, corpus: &PyCorpus) -> PyResult<f64> {
    measures::missing_mass(&world.0, &corpus.0).map_err(err)
}

#[pyfunction]
fn good_turing(corpus: &PyCorpus) -> f64 {
    measures::good_turing(&corpus.0)
}

/// Returns `(point, lo, hi)`.
#[pyfunction(name = "clopper_pearson")]
#[pyo3(signature = (successes, trials, confidence = 0.95))]
fn py_clopper_pearson(successes: u64, trials: u64, confidence: f64) -> PyResult<(f64, f64, f64)> {
    let ci = clopper_pearson(successes, trials, confidence).map_err(err)?;
    Ok((ci.point, ci.lo, ci.hi))
}

#[pyfunction]
fn theorems() -> Vec<&'static str> {
    Theorem::ALL.iter().map(|t| t.name()).collect()
}

#[pyfunction(name = "mc_verify")]
#[pyo3(signature = (theorem, meta, model, n, delta = None, trials = 10_000, seed = 0))]
#[allow(clippy::too_many_arguments)]
fn py_mc_verify<'py>(
    py: Python<'py>,
    theorem: &str,
    meta: &PyMetaSpec,
    model: &str,
    n: u64,
    delta: Option<f64>,
    trials: usize,
    seed: u64,
) -> PyResult<Bound<'py, PyDict>> {
    let th: Theorem = theorem.parse().map_err(err)?;
    let kind = model_kind(model)?;
    let meta = meta.0.clone();
    let rep = py
        .detach(move || verify::mc_verify(th, &meta, &kind, n, delta, trials, seed))
        .map_err(err)?;
    let d = PyDict::new(py);
    d.set_item("theorem", rep.theorem.name())?;
    d.set_item("model", rep.model)?;
    d.set_item("n_statements", rep.n_statements)?;
    d.set_item("k", rep.k)?;
    d.set_item("n", rep.n)?;
    d.set_item("delta", rep.delta)?;
    d.set_item("r", rep.r)?;
    d.set_item("trials", rep.trials)?;
    d.set_item("successes", rep.successes)?;
    d.set_item("empirical_freq", rep.empirical_freq)?;
    d.set_item("guaranteed_freq", rep.guaranteed_freq)?;
    d.set_item("binomial_slack", rep.binomial_slack)?;
    d.set_item("pass", rep.pass)?;
    d.set_item("vacuous", rep.vacuous)?;
    Ok(d)
}

#[pymodule]
fn innovbench(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyDist>()?;
    m.add_class::<PyPartition>()?;
    m.add_class::<PyCorpus>()?;
    m.add_class::<PyMetaSpec>()?;
    m.add_class::<PyWorld>()?;
    m.add_class::<PyPosterior>()?;
    m.add_class::<PyModel>()?;
    m.add_class::<PyEmbeddingTable>()?;
    m.add_class::<PyNgramModel>()?;
    m.add_function(wrap_pyfunction!(preprocess, m)?)?;
    m.add_function(wrap_pyfunction!(py_coarsen, m)?)?;
    m.add_function(wrap_pyfunction!(py_tv_distance, m)?)?;
    m.add_function(wrap_pyfunction!(py_miscalibration, m)?)?;
    m.add_function(wrap_pyfunction!(py_level_set_partition, m)?)?;
    m.add_function(wrap_pyfunction!(innovation_rate, m)?)?;
    m.add_function(wrap_pyfunction!(hallucination_rate, m)?)?;
    m.add_function(wrap_pyfunction!(missing_mass, m)?)?;
    m.add_function(wrap_pyfunction!(good_turing, m)?)?;
    m.add_function(wrap_pyfunction!(py_clopper_pearson, m)?)?;
    m.add_function(wrap_pyfunction!(theorems, m)?)?;
    m.add_function(wrap_pyfunction!(py_mc_verify, m)?)?;
    Ok(())
}
