//! Dense text embeddings: a deterministic feature-hashing embedder and a
//! client for a remote embedding service.

use serde::{Deserialize, Serialize};
use xxhash_rust::xxh64::xxh64;

use crate::error::{MeveError, Result};
use crate::remote::JsonClient;
use crate::tokenizer::alnum_terms;

pub const DEFAULT_DIMS: usize = 768;
const HASH_SEED: u64 = 0;

#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingVector(Vec<f32>);

impl EmbeddingVector {
    pub fn new(values: Vec<f32>) -> Self {
        Self(values)
    }

    pub fn zeros(dims: usize) -> Self {
        Self(vec![0.0; dims])
    }

    pub fn dims(&self) -> usize {
        self.0.len()
    }

    pub fn values(&self) -> &[f32] {
        &self.0
    }

    pub fn into_values(self) -> Vec<f32> {
        self.0
    }

    pub fn norm(&self) -> f64 {
        norm(&self.0)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum EmbedderSpec {
    HashTf { dims: usize },
    Remote { dims: usize, endpoint: String },
}

impl Default for EmbedderSpec {
    fn default() -> Self {
        EmbedderSpec::HashTf { dims: DEFAULT_DIMS }
    }
}

impl EmbedderSpec {
    pub fn dims(&self) -> usize {
        match self {
            EmbedderSpec::HashTf { dims } | EmbedderSpec::Remote { dims, .. } => *dims,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.dims() == 0 {
            return Err(MeveError::Config("embedder dims must be >= 1".into()));
        }
        Ok(())
    }
}

/// Feature-hashed term-frequency vector.
///
/// Each lowercase alphanumeric term is hashed with xxh64 (seed 0). The
/// bucket is `hash % dims` and the sign comes from the next bit,
/// `(hash / dims) & 1` (0 => +1). The result is L2-normalized, or all zero
/// when the text has no terms.
pub fn embed_hash_tf(text: &str, dims: usize) -> EmbeddingVector {
    assert!(dims >= 1, "dims must be positive");
    let mut acc = vec![0.0f64; dims];
    let d = dims as u64;
    for term in alnum_terms(text) {
        let h = xxh64(term.as_bytes(), HASH_SEED);
        let bucket = (h % d) as usize;
        let sign = if (h / d) & 1 == 0 { 1.0 } else { -1.0 };
        acc[bucket] += sign;
    }
    let n = acc.iter().map(|x| x * x).sum::<f64>().sqrt();
    if n == 0.0 {
        return EmbeddingVector::zeros(dims);
    }
    EmbeddingVector(acc.into_iter().map(|x| (x / n) as f32).collect())
}

pub(crate) fn norm(v: &[f32]) -> f64 {
    v.iter().map(|&x| f64::from(x) * f64::from(x)).sum::<f64>().sqrt()
}

pub(crate) fn dot(a: &[f32], b: &[f32]) -> f64 {
    a.iter().zip(b).map(|(&x, &y)| f64::from(x) * f64::from(y)).sum()
}

/// Cosine similarity with precomputed norms; 0 when either norm is 0.
pub(crate) fn cosine_with_norms(a: &[f32], a_norm: f64, b: &[f32], b_norm: f64) -> f64 {
    if a_norm == 0.0 || b_norm == 0.0 {
        return 0.0;
    }
    (dot(a, b) / (a_norm * b_norm)).clamp(-1.0, 1.0)
}

pub fn cosine(a: &EmbeddingVector, b: &EmbeddingVector) -> Result<f64> {
    if a.dims() != b.dims() {
        return Err(MeveError::DimensionMismatch {
            expected: a.dims(),
            actual: b.dims(),
        });
    }
    Ok(cosine_with_norms(&a.0, a.norm(), &b.0, b.norm()))
}

#[derive(Serialize)]
struct EmbedRequest<'a> {
    texts: &'a [&'a str],
}

#[derive(Deserialize)]
struct EmbedResponse {
    vectors: Vec<Vec<f32>>,
}

/// Client for `POST <endpoint>/embed`.
#[derive(Debug, Clone)]
pub struct RemoteEmbedder {
    client: JsonClient,
    dims: usize,
}

impl RemoteEmbedder {
    pub fn new(endpoint: &str, dims: usize) -> Self {
        Self {
            client: JsonClient::new(endpoint),
            dims,
        }
    }

    pub fn embed(&self, texts: &[&str]) -> Result<Vec<EmbeddingVector>> {
        if texts.is_empty() {
            return Ok(Vec::new());
        }
        let resp: EmbedResponse = self.client.post("/embed", &EmbedRequest { texts })?;
        if resp.vectors.len() != texts.len() {
            return Err(MeveError::Protocol(format!(
                "sent {} texts, received {} vectors",
                texts.len(),
                resp.vectors.len()
            )));
        }
        resp.vectors
            .into_iter()
            .map(|v| {
                if v.len() != self.dims {
                    Err(MeveError::Protocol(format!(
                        "expected {}-dimensional vectors, received {}",
                        self.dims,
                        v.len()
                    )))
                } else {
                    Ok(EmbeddingVector(v))
                }
            })
            .collect()
    }
}

/// A constructed embedder.
#[derive(Debug, Clone)]
pub enum Embedder {
    HashTf { dims: usize },
    Remote(RemoteEmbedder),
}

impl Embedder {
    pub fn from_spec(spec: &EmbedderSpec) -> Result<Self> {
        spec.validate()?;
        Ok(match spec {
            EmbedderSpec::HashTf { dims } => Embedder::HashTf { dims: *dims },
            EmbedderSpec::Remote { dims, endpoint } => Embedder::Remote(RemoteEmbedder::new(endpoint, *dims)),
        })
    }

    pub fn dims(&self) -> usize {
        match self {
            Embedder::HashTf { dims } => *dims,
            Embedder::Remote(r) => r.dims,
        }
    }

    pub fn embed_batch(&self, texts: &[&str]) -> Result<Vec<EmbeddingVector>> {
        match self {
            Embedder::HashTf { dims } => Ok(texts.iter().map(|t| embed_hash_tf(t, *dims)).collect()),
            Embedder::Remote(r) => r.embed(texts),
        }
    }

    pub fn embed(&self, text: &str) -> Result<EmbeddingVector> {
        Ok(self.embed_batch(&[text])?.pop().expect("one vector per text"))
    }
}

pub fn embed_remote(texts: &[&str], spec: &EmbedderSpec) -> Result<Vec<EmbeddingVector>> {
    match spec {
        EmbedderSpec::Remote { dims, endpoint } => RemoteEmbedder::new(endpoint, *dims).embed(texts),
        EmbedderSpec::HashTf { .. } => Err(MeveError::Config("embed_remote requires a remote embedder spec".into())),
    }
}
