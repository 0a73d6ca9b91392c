//! Python bindings: models, tokenizer and the analysis entry points.
//! Structured results come back as plain dicts and lists.

use std::path::PathBuf;

use expertscope::attribution::{dla, expert_update};
use expertscope::autointerp::{
    label_experts, mine_examples, LabelSettings, MiningSettings, MockClient, MockMode, PromptTemplates,
    TranscriptStore,
};
use expertscope::corpus::{find_concept, Concept, TokenizedCorpus, Tokenizer as CoreTokenizer};
use expertscope::model::{plant_experts, Component, PlantGains, PlantSpec};
use expertscope::probing::{run_sweep, Site, SweepSettings};
use expertscope::specialization::{
    cluster_unembedding, specialization_report, DistributionKind, LayerTokenCounts, SpecializationParams,
};
use expertscope::{Error, Model as CoreModel, ModelConfig as CoreConfig};
use pyo3::exceptions::{PyOSError, PyRuntimeError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::{PyDict, PyList};
use pyo3::IntoPyObjectExt;
use serde_json::Value;

fn err(e: Error) -> PyErr {
    match e {
        Error::Io { .. } => PyOSError::new_err(e.to_string()),
        e if e.is_usage() => PyValueError::new_err(e.to_string()),
        e => PyRuntimeError::new_err(e.to_string()),
    }
}

fn to_py<'py>(py: Python<'py>, v: &Value) -> PyResult<Bound<'py, PyAny>> {
    Ok(match v {
        Value::Null => py.None().into_bound(py),
        Value::Bool(b) => b.into_bound_py_any(py)?,
        Value::Number(n) => match (n.as_i64(), n.as_u64()) {
            (Some(i), _) => i.into_bound_py_any(py)?,
            (None, Some(u)) => u.into_bound_py_any(py)?,
            _ => n.as_f64().unwrap_or(f64::NAN).into_bound_py_any(py)?,
        },
        Value::String(s) => s.into_bound_py_any(py)?,
        Value::Array(items) => {
            let list = PyList::empty(py);
            for item in items {
                list.append(to_py(py, item)?)?;
            }
            list.into_any()
        }
        Value::Object(map) => {
            let dict = PyDict::new(py);
            for (k, item) in map {
                dict.set_item(k, to_py(py, item)?)?;
            }
            dict.into_any()
        }
    })
}

fn serde_to_py<'py>(py: Python<'py>, value: &impl serde::Serialize) -> PyResult<Bound<'py, PyAny>> {
    let v = serde_json::to_value(value).map_err(|e| PyRuntimeError::new_err(e.to_string()))?;
    to_py(py, &v)
}

fn corpus_for(path: Option<PathBuf>, tokenizer: &CoreTokenizer) -> PyResult<TokenizedCorpus> {
    match path {
        Some(p) => TokenizedCorpus::load(&p, tokenizer).map_err(err),
        None => Ok(TokenizedCorpus::fixture()),
    }
}

#[pyclass(name = "ModelConfig", module = "expertscope_py", from_py_object)]
#[derive(Clone)]
struct ModelConfig {
    inner: CoreConfig,
}

#[pymethods]
impl ModelConfig {
    /// `olmoe-toy`, `small-moe` or `small-dense`.
    #[staticmethod]
    fn preset(name: &str) -> PyResult<Self> {
        Ok(Self { inner: CoreConfig::preset(name).map_err(err)? })
    }

    #[staticmethod]
    fn from_json(text: &str) -> PyResult<Self> {
        let inner: CoreConfig = serde_json::from_str(text).map_err(|e| PyValueError::new_err(e.to_string()))?;
        inner.validate().map_err(err)?;
        Ok(Self { inner })
    }

    fn to_json(&self) -> PyResult<String> {
        serde_json::to_string(&self.inner).map_err(|e| PyRuntimeError::new_err(e.to_string()))
    }

    #[getter]
    fn d_model(&self) -> usize {
        self.inner.d_model
    }

    #[getter]
    fn n_layers(&self) -> usize {
        self.inner.n_layers
    }

    #[getter]
    fn n_experts(&self) -> usize {
        self.inner.n_experts
    }

    #[getter]
    fn n_active(&self) -> usize {
        self.inner.n_active
    }

    #[getter]
    fn vocab_size(&self) -> usize {
        self.inner.vocab_size
    }

    #[getter]
    fn seed(&self) -> u64 {
        self.inner.seed
    }

    fn with_seed(&self, seed: u64) -> Self {
        let mut inner = self.inner.clone();
        inner.seed = seed;
        Self { inner }
    }

    fn routing_sparsity(&self) -> f64 {
        self.inner.routing_sparsity()
    }

    fn __repr__(&self) -> String {
        format!(
            "ModelConfig(d_model={}, n_layers={}, n_experts={}, n_active={}, seed={})",
            self.inner.d_model, self.inner.n_layers, self.inner.n_experts, self.inner.n_active, self.inner.seed
        )
    }
}

#[pyclass(name = "Tokenizer", module = "expertscope_py", from_py_object)]
#[derive(Clone)]
struct Tokenizer {
    inner: CoreTokenizer,
}

#[pymethods]
impl Tokenizer {
    /// The bundled byte-level BPE tokenizer.
    #[staticmethod]
    fn shipped() -> Self {
        Self { inner: CoreTokenizer::shipped().clone() }
    }

    #[staticmethod]
    fn load(path: PathBuf) -> PyResult<Self> {
        Ok(Self { inner: CoreTokenizer::load(&path).map_err(err)? })
    }

    fn encode(&self, text: &str) -> Vec<u32> {
        self.inner.encode(text.as_bytes())
    }

    fn decode(&self, ids: Vec<u32>) -> PyResult<String> {
        let bytes = self.inner.decode(&ids).map_err(err)?;
        Ok(String::from_utf8_lossy(&bytes).into_owned())
    }

    fn token_str(&self, id: u32) -> String {
        self.inner.token_str(id)
    }

    #[getter]
    fn vocab_size(&self) -> usize {
        self.inner.vocab_size()
    }
}

#[pyclass(name = "Model", module = "expertscope_py")]
struct Model {
    inner: CoreModel,
}

impl Model {
    fn check_tokens(&self, tokens: &[u32]) -> PyResult<()> {
        if tokens.is_empty() {
            return Err(PyValueError::new_err("empty token sequence"));
        }
        Ok(())
    }
}

#[pymethods]
impl Model {
    #[staticmethod]
    fn random(config: &ModelConfig) -> PyResult<Self> {
        Ok(Self { inner: CoreModel::random(config.inner.clone()).map_err(err)? })
    }

    /// Random weights with planted experts; `plants` is a JSON list of plant specs.
    #[staticmethod]
    fn plant(config: &ModelConfig, plants: &str) -> PyResult<Self> {
        let specs: Vec<PlantSpec> = serde_json::from_str(plants).map_err(|e| PyValueError::new_err(e.to_string()))?;
        let weights = plant_experts(&config.inner, &specs, PlantGains::default()).map_err(err)?;
        Ok(Self { inner: CoreModel::new(config.inner.clone(), weights).map_err(err)? })
    }

    #[staticmethod]
    fn load(path: PathBuf) -> PyResult<Self> {
        Ok(Self { inner: CoreModel::load(&path).map_err(err)? })
    }

    fn save(&self, path: PathBuf) -> PyResult<()> {
        self.inner.save(&path).map_err(err)
    }

    #[getter]
    fn config(&self) -> ModelConfig {
        ModelConfig { inner: self.inner.config.clone() }
    }

    /// Logits at every position.
    fn logits(&self, py: Python<'_>, tokens: Vec<u32>) -> PyResult<Vec<Vec<f64>>> {
        self.check_tokens(&tokens)?;
        let trace = py.detach(|| self.inner.forward(&tokens)).map_err(err)?;
        Ok(trace.logits)
    }

    /// `[(expert, gate), ...]` per position for one layer.
    fn routing(&self, py: Python<'_>, tokens: Vec<u32>, layer: usize) -> PyResult<Vec<Vec<(usize, f32)>>> {
        self.check_tokens(&tokens)?;
        if layer >= self.inner.config.n_layers {
            return Err(PyValueError::new_err(format!("layer {layer} out of range")));
        }
        let trace = py.detach(|| self.inner.forward(&tokens)).map_err(err)?;
        Ok(trace.layers[layer]
            .positions
            .iter()
            .map(|p| p.experts.iter().map(|e| (e.expert, e.gate)).collect())
            .collect())
    }

    /// Direct logit attribution of `target` at `position` (default: last)
    /// per residual component and per routed expert.
    #[pyo3(signature = (tokens, target, position=None))]
    fn dla<'py>(
        &self,
        py: Python<'py>,
        tokens: Vec<u32>,
        target: u32,
        position: Option<usize>,
    ) -> PyResult<Bound<'py, PyAny>> {
        self.check_tokens(&tokens)?;
        let position = position.unwrap_or(tokens.len() - 1);
        if position >= tokens.len() || target as usize >= self.inner.config.vocab_size {
            return Err(PyValueError::new_err("position or target out of range"));
        }
        let m = &self.inner;
        let trace = py.detach(|| m.forward(&tokens)).map_err(err)?;
        let r = &trace.final_residual[position];
        let mut rows: Vec<(Component, f64)> = Vec::new();
        for (component, v) in trace.residual_components(position) {
            rows.push((component, dla(m, &v, r, target).map_err(err)?));
        }
        for layer in 0..m.config.n_layers {
            for e in &trace.at(layer, position).experts {
                let v = expert_update(&trace, layer, e.expert, position);
                rows.push((Component::Expert { layer, expert: e.expert }, dla(m, &v, r, target).map_err(err)?));
            }
        }
        let report = serde_json::json!({
            "logit": trace.logits[position][target as usize],
            "components": rows.iter().map(|(c, v)| serde_json::json!({ "component": c, "dla": v })).collect::<Vec<_>>(),
        });
        to_py(py, &report)
    }

    fn __repr__(&self) -> String {
        format!("Model({})", ModelConfig { inner: self.inner.config.clone() }.__repr__())
    }
}

/// Base-2 Jensen-Shannon divergence.
#[pyfunction]
fn jsd(p: Vec<f64>, q: Vec<f64>) -> PyResult<f64> {
    expertscope::specialization::jsd(&p, &q).map_err(err)
}

/// Monte Carlo random-assignment baseline: `(mean, stderr)`.
#[pyfunction]
fn random_baseline(q: Vec<f64>, n: u64, mc_samples: usize, seed: u64) -> PyResult<(f64, f64)> {
    let b = expertscope::specialization::random_baseline(&q, n, mc_samples, seed).map_err(err)?;
    Ok((b.mean, b.stderr))
}

/// Sparse probing sweep; returns `{"settings", "grid", "best"}`.
#[pyfunction]
#[pyo3(signature = (model, concepts, k_values=None, sites=None, samples=None, seed=0, corpus=None))]
#[allow(clippy::too_many_arguments)]
fn probe<'py>(
    py: Python<'py>,
    model: &Model,
    concepts: Vec<String>,
    k_values: Option<Vec<usize>>,
    sites: Option<Vec<String>>,
    samples: Option<usize>,
    seed: u64,
    corpus: Option<PathBuf>,
) -> PyResult<Bound<'py, PyAny>> {
    let mut settings = SweepSettings { seed, ..Default::default() };
    if let Some(k) = k_values {
        settings.k_values = k;
    }
    if let Some(n) = samples {
        settings.n_samples = n;
    }
    if let Some(s) = sites {
        settings.sites = Some(s.iter().map(|s| s.parse::<Site>()).collect::<Result<_, _>>().map_err(err)?);
    }
    let concepts = concepts
        .iter()
        .map(|n| find_concept(n).and_then(|spec| Concept::compile(&spec)))
        .collect::<Result<Vec<_>, _>>()
        .map_err(err)?;
    let corpus = corpus_for(corpus, CoreTokenizer::shipped())?;
    let m = &model.inner;
    let result = py.detach(|| run_sweep(m, &corpus, &concepts, &settings)).map_err(err)?;
    serde_to_py(py, &result)
}

/// Specialization report for one layer, cluster count and distribution kind.
#[pyfunction]
#[pyo3(signature = (model, layer, k, kind="routing", budget=20_000, mc_samples=100, seed=0, corpus=None))]
#[allow(clippy::too_many_arguments)]
fn specialize<'py>(
    py: Python<'py>,
    model: &Model,
    layer: usize,
    k: usize,
    kind: &str,
    budget: usize,
    mc_samples: usize,
    seed: u64,
    corpus: Option<PathBuf>,
) -> PyResult<Bound<'py, PyAny>> {
    let kind: DistributionKind = kind.parse().map_err(err)?;
    let corpus = corpus_for(corpus, CoreTokenizer::shipped())?;
    let m = &model.inner;
    if layer >= m.config.n_layers {
        return Err(PyValueError::new_err(format!("layer {layer} out of range")));
    }
    let params = SpecializationParams { mc_samples, seed, ..Default::default() };
    let report = py
        .detach(|| {
            let map = cluster_unembedding(&m.weights.unembed, k, seed)?;
            let counts = LayerTokenCounts::collect(
                m,
                &corpus,
                layer,
                kind,
                budget,
                expertscope::protocol::CONTEXT_TOKENS,
                expertscope::protocol::FUNCTIONAL_TOP_N,
            )?;
            let dists = (0..counts.counts.len())
                .map(|e| counts.distribution(e, &map))
                .collect::<expertscope::Result<Vec<_>>>()?;
            specialization_report(&dists, map.k, &params)
        })
        .map_err(err)?;
    serde_to_py(py, &report)
}

/// Mines examples and labels experts against an offline scripted endpoint
/// (`ground-truth`, `all-positive`, `all-negative` or `echo`).
#[pyfunction]
#[pyo3(signature = (model, layers=None, mode="ground-truth", seed=0, corpus=None))]
fn autointerp_mock<'py>(
    py: Python<'py>,
    model: &Model,
    layers: Option<Vec<usize>>,
    mode: &str,
    seed: u64,
    corpus: Option<PathBuf>,
) -> PyResult<Bound<'py, PyAny>> {
    let mode: MockMode = mode.parse().map_err(err)?;
    let tokenizer = CoreTokenizer::shipped();
    let corpus = corpus_for(corpus, tokenizer)?;
    let m = &model.inner;
    let layers = layers.unwrap_or((0..m.config.n_layers).collect());
    let experts: Vec<(usize, usize)> = layers
        .iter()
        .flat_map(|&l| (0..m.config.experts_in_layer(l)).map(move |e| (l, e)))
        .collect();
    let records = py
        .detach(|| {
            let settings = MiningSettings { seed, ..Default::default() };
            let mined = mine_examples(m, tokenizer, &corpus, Some(&experts), &settings)?;
            let labels = LabelSettings { seed, ..Default::default() };
            label_experts(&mined, &MockClient { mode }, &PromptTemplates::shipped(), &TranscriptStore::in_memory(), &labels)
        })
        .map_err(err)?;
    serde_to_py(py, &records)
}

#[pymodule]
fn expertscope_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<ModelConfig>()?;
    m.add_class::<Tokenizer>()?;
    m.add_class::<Model>()?;
    m.add_function(wrap_pyfunction!(jsd, m)?)?;
    m.add_function(wrap_pyfunction!(random_baseline, m)?)?;
    m.add_function(wrap_pyfunction!(probe, m)?)?;
    m.add_function(wrap_pyfunction!(specialize, m)?)?;
    m.add_function(wrap_pyfunction!(autointerp_mock, m)?)?;
    m.add("__version__", env!("CARGO_PKG_VERSION"))?;
    Ok(())
}
