//! Python bindings for the context-composition engine.

use std::path::PathBuf;

use meve_core::embedding::DEFAULT_DIMS;
use meve_core::eval::{grounding_proxy as proxy, run_eval, EvalQuery};
use meve_core::store::{load_index_dir, write_index_dir};
use meve_core::{
    chunk_document as chunk_doc, embed_hash_tf as embed, load_corpus, Corpus, EmbeddingVector, MeveError, Mode,
    PipelineConfig, RawDocument, Tokenizer, TokenizerSpec,
};
use pyo3::create_exception;
use pyo3::exceptions::{PyConnectionError, PyException, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyDict;

create_exception!(meve, EngineError, PyException);

fn to_py(e: MeveError) -> PyErr {
    if e.is_transport() {
        PyConnectionError::new_err(e.to_string())
    } else if e.is_config() {
        PyValueError::new_err(e.to_string())
    } else {
        EngineError::new_err(e.to_string())
    }
}

/// Serialize through JSON into plain Python objects.
fn to_object<T: serde::Serialize>(py: Python<'_>, value: &T) -> PyResult<Py<PyAny>> {
    let text = serde_json::to_string(value).map_err(|e| EngineError::new_err(e.to_string()))?;
    Ok(py.import("json")?.call_method1("loads", (text,))?.unbind())
}

fn parse_config(py: Python<'_>, config: Option<&Bound<'_, PyAny>>) -> PyResult<PipelineConfig> {
    let Some(config) = config else {
        return Ok(PipelineConfig::default());
    };
    let text: String = if let Ok(s) = config.extract::<String>() {
        s
    } else {
        py.import("json")?.call_method1("dumps", (config,))?.extract()?
    };
    let cfg: PipelineConfig = serde_json::from_str(&text).map_err(|e| PyValueError::new_err(e.to_string()))?;
    cfg.validate().map_err(to_py)?;
    Ok(cfg)
}

fn parse_mode(mode: Option<&str>, default: Mode) -> PyResult<Mode> {
    mode.map_or(Ok(default), |m| m.parse().map_err(to_py))
}

/// A built pipeline over one corpus. Config accepts a dict or JSON string
/// using the pipeline config field names.
#[pyclass(frozen)]
struct Pipeline {
    inner: meve_core::Pipeline,
}

#[pymethods]
impl Pipeline {
    /// Build from a list of dicts with keys `id`, `title` (optional) and `text`.
    #[new]
    #[pyo3(signature = (documents, config=None))]
    fn new(py: Python<'_>, documents: Vec<Bound<'_, PyDict>>, config: Option<&Bound<'_, PyAny>>) -> PyResult<Self> {
        let mut docs = Vec::with_capacity(documents.len());
        for (i, d) in documents.iter().enumerate() {
            let get = |k: &str| -> PyResult<Option<String>> { d.get_item(k)?.map(|v| v.extract()).transpose() };
            let text = get("text")?.ok_or_else(|| PyValueError::new_err(format!("document {i} has no text")))?;
            docs.push(RawDocument {
                doc_id: get("id")?.unwrap_or_else(|| format!("doc-{}", i + 1)),
                title: get("title")?.unwrap_or_else(|| "untitled".into()),
                text,
            });
        }
        let cfg = parse_config(py, config)?;
        let corpus = Corpus::from_documents(&docs).map_err(to_py)?;
        let inner = py.detach(|| meve_core::Pipeline::build(cfg, corpus)).map_err(to_py)?;
        Ok(Self { inner })
    }

    /// Build from a JSONL corpus file.
    #[staticmethod]
    #[pyo3(signature = (path, config=None))]
    fn from_jsonl(py: Python<'_>, path: PathBuf, config: Option<&Bound<'_, PyAny>>) -> PyResult<Self> {
        let cfg = parse_config(py, config)?;
        let inner = py
            .detach(|| {
                let corpus = Corpus::from_documents(&load_corpus(&path)?)?;
                meve_core::Pipeline::build(cfg, corpus)
            })
            .map_err(to_py)?;
        Ok(Self { inner })
    }

    /// Load an index directory written by `save` or the `meve index` command.
    #[staticmethod]
    #[pyo3(signature = (path, config=None))]
    fn from_index_dir(py: Python<'_>, path: PathBuf, config: Option<&Bound<'_, PyAny>>) -> PyResult<Self> {
        let explicit = config.is_some();
        let mut cfg = parse_config(py, config)?;
        let (corpus, vectors, bm25) = load_index_dir(&path).map_err(to_py)?;
        if !explicit {
            cfg.embedder = vectors.embedder().clone();
        }
        let inner = meve_core::Pipeline::new(cfg, corpus, vectors, bm25).map_err(to_py)?;
        Ok(Self { inner })
    }

    fn save(&self, py: Python<'_>, path: PathBuf) -> PyResult<()> {
        let p = &self.inner;
        py.detach(|| write_index_dir(&path, p.corpus(), p.vectors(), p.bm25()))
            .map_err(to_py)
    }

    /// Run one question; returns the result as a dict.
    #[pyo3(signature = (question, mode=None))]
    fn query(&self, py: Python<'_>, question: &str, mode: Option<&str>) -> PyResult<Py<PyAny>> {
        let mode = parse_mode(mode, self.inner.config().mode)?;
        let result = py.detach(|| self.inner.run_query_mode(question, mode)).map_err(to_py)?;
        to_object(py, &result)
    }

    /// Evaluate `(qid, question)` pairs across modes; one dict per pair and mode.
    #[pyo3(signature = (queries, modes=None, jobs=1))]
    fn evaluate(
        &self,
        py: Python<'_>,
        queries: Vec<(String, String)>,
        modes: Option<Vec<String>>,
        jobs: usize,
    ) -> PyResult<Py<PyAny>> {
        let modes = match modes {
            Some(ms) => ms
                .iter()
                .map(|m| parse_mode(Some(m), Mode::FullMeve))
                .collect::<PyResult<Vec<_>>>()?,
            None => vec![Mode::FullMeve, Mode::StandardRag, Mode::NoRag],
        };
        let queries: Vec<EvalQuery> = queries
            .into_iter()
            .map(|(qid, question)| EvalQuery { qid, question })
            .collect();
        let records = py.detach(|| run_eval(&queries, &modes, &self.inner, jobs.max(1)));
        to_object(py, &records)
    }

    #[getter]
    fn config(&self, py: Python<'_>) -> PyResult<Py<PyAny>> {
        to_object(py, self.inner.config())
    }

    fn count_tokens(&self, text: &str) -> usize {
        self.inner.tokenizer().count_tokens(text)
    }

    fn __len__(&self) -> usize {
        self.inner.corpus().len()
    }

    fn __repr__(&self) -> String {
        format!(
            "Pipeline(chunks={}, mode={})",
            self.inner.corpus().len(),
            self.inner.config().mode
        )
    }
}

/// Token count with the built-in counter, or GPT-2 style BPE when both
/// vocab and merges paths are given.
#[pyfunction]
#[pyo3(signature = (text, vocab=None, merges=None))]
fn count_tokens(text: &str, vocab: Option<PathBuf>, merges: Option<PathBuf>) -> PyResult<usize> {
    let spec = match (vocab, merges) {
        (None, None) => TokenizerSpec::WhitespacePunct,
        (Some(vocab_path), Some(merges_path)) => TokenizerSpec::BpeFiles {
            vocab_path,
            merges_path,
        },
        _ => return Err(PyValueError::new_err("vocab and merges must be given together")),
    };
    Ok(Tokenizer::from_spec(&spec).map_err(to_py)?.count_tokens(text))
}

#[pyfunction]
fn split_sentences(text: &str) -> Vec<String> {
    meve_core::segment::split_sentences(text)
        .into_iter()
        .map(str::to_string)
        .collect()
}

#[pyfunction]
#[pyo3(signature = (text, doc_id="doc", title="untitled"))]
fn chunk_document(py: Python<'_>, text: &str, doc_id: &str, title: &str) -> PyResult<Py<PyAny>> {
    let doc = RawDocument {
        doc_id: doc_id.into(),
        title: title.into(),
        text: text.into(),
    };
    to_object(py, &chunk_doc(&doc))
}

#[pyfunction]
#[pyo3(signature = (text, dims=DEFAULT_DIMS))]
fn embed_hash_tf(text: &str, dims: usize) -> PyResult<Vec<f32>> {
    if dims == 0 {
        return Err(PyValueError::new_err("dims must be >= 1"));
    }
    Ok(embed(text, dims).into_values())
}

#[pyfunction]
fn cosine(a: Vec<f32>, b: Vec<f32>) -> PyResult<f64> {
    meve_core::cosine(&EmbeddingVector::new(a), &EmbeddingVector::new(b)).map_err(to_py)
}

#[pyfunction]
fn sigmoid(x: f64) -> f64 {
    meve_core::sigmoid(x)
}

#[pyfunction]
fn score_lexical(query: &str, chunk_text: &str) -> f64 {
    meve_core::score_lexical(query, chunk_text)
}

/// Returns `(answer_sentence, label, overlap)`.
#[pyfunction]
fn grounding_proxy(question: &str, context: &str) -> (String, &'static str, usize) {
    let g = proxy(question, context);
    (g.answer_sentence, g.label.as_str(), g.overlap)
}

#[pymodule]
fn meve(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<Pipeline>()?;
    m.add("EngineError", m.py().get_type::<EngineError>())?;
    m.add_function(wrap_pyfunction!(count_tokens, m)?)?;
    m.add_function(wrap_pyfunction!(split_sentences, m)?)?;
    m.add_function(wrap_pyfunction!(chunk_document, m)?)?;
    m.add_function(wrap_pyfunction!(embed_hash_tf, m)?)?;
    m.add_function(wrap_pyfunction!(cosine, m)?)?;
    m.add_function(wrap_pyfunction!(sigmoid, m)?)?;
    m.add_function(wrap_pyfunction!(score_lexical, m)?)?;
    m.add_function(wrap_pyfunction!(grounding_proxy, m)?)?;
    m.add("MODES", Mode::ALL.map(Mode::as_str).to_vec())?;
    Ok(())
}
