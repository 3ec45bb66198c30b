//! Exact k-nearest-neighbor search over chunk embeddings.

use std::cmp::Ordering;
use std::collections::HashMap;
use std::fs;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::corpus::Corpus;
use crate::embedding::{cosine_with_norms, norm, Embedder, EmbedderSpec, EmbeddingVector};
use crate::error::{MeveError, Result};

const REMOTE_BATCH: usize = 64;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Neighbor {
    pub chunk_id: String,
    pub similarity: f64,
}

/// Row-major `N x D` matrix of chunk embeddings, rows in chunk-store order.
#[derive(Debug, Clone)]
pub struct VectorIndex {
    embedder: EmbedderSpec,
    dims: usize,
    ids: Vec<String>,
    rows: HashMap<String, usize>,
    data: Vec<f32>,
    norms: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
struct Header {
    dims: usize,
    count: usize,
    embedder: EmbedderSpec,
}

/// Similarity descending, then chunk id ascending.
pub(crate) fn neighbor_order(a_sim: f64, a_id: &str, b_sim: f64, b_id: &str) -> Ordering {
    b_sim.total_cmp(&a_sim).then_with(|| a_id.cmp(b_id))
}

pub fn build_index(corpus: &Corpus, spec: &EmbedderSpec) -> Result<VectorIndex> {
    if corpus.is_empty() {
        return Err(MeveError::EmptyCorpus);
    }
    let embedder = Embedder::from_spec(spec)?;
    let dims = embedder.dims();
    let mut data = Vec::with_capacity(corpus.len() * dims);
    let texts: Vec<&str> = corpus.chunks().iter().map(|c| c.text.as_str()).collect();
    let batch = match embedder {
        Embedder::HashTf { .. } => texts.len(),
        Embedder::Remote(_) => REMOTE_BATCH,
    };
    for group in texts.chunks(batch) {
        for v in embedder.embed_batch(group)? {
            if v.dims() != dims {
                return Err(MeveError::DimensionMismatch {
                    expected: dims,
                    actual: v.dims(),
                });
            }
            data.extend_from_slice(v.values());
        }
    }
    let ids = corpus.chunks().iter().map(|c| c.chunk_id.clone()).collect();
    Ok(VectorIndex::from_parts(spec.clone(), dims, ids, data))
}

impl VectorIndex {
    fn from_parts(embedder: EmbedderSpec, dims: usize, ids: Vec<String>, data: Vec<f32>) -> Self {
        let norms = data.chunks(dims.max(1)).map(norm).collect();
        let rows = ids.iter().enumerate().map(|(i, id)| (id.clone(), i)).collect();
        Self {
            embedder,
            dims,
            ids,
            rows,
            data,
            norms,
        }
    }

    /// Index over caller-supplied vectors (all must share dims).
    pub fn from_vectors(embedder: EmbedderSpec, entries: Vec<(String, EmbeddingVector)>) -> Result<Self> {
        let dims = entries.first().map_or(embedder.dims(), |(_, v)| v.dims());
        let mut ids = Vec::with_capacity(entries.len());
        let mut data = Vec::with_capacity(entries.len() * dims);
        let mut seen = std::collections::HashSet::new();
        for (id, v) in entries {
            if v.dims() != dims {
                return Err(MeveError::DimensionMismatch {
                    expected: dims,
                    actual: v.dims(),
                });
            }
            if !seen.insert(id.clone()) {
                return Err(MeveError::DuplicateChunkId(id));
            }
            data.extend_from_slice(v.values());
            ids.push(id);
        }
        Ok(Self::from_parts(embedder, dims, ids, data))
    }

    pub fn dims(&self) -> usize {
        self.dims
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn embedder(&self) -> &EmbedderSpec {
        &self.embedder
    }

    pub fn ids(&self) -> &[String] {
        &self.ids
    }

    fn row(&self, i: usize) -> &[f32] {
        &self.data[i * self.dims..(i + 1) * self.dims]
    }

    /// Stored vector and its norm.
    pub fn vector(&self, chunk_id: &str) -> Option<(&[f32], f64)> {
        self.rows.get(chunk_id).map(|&i| (self.row(i), self.norms[i]))
    }

    /// Cosine similarity between two stored vectors.
    pub fn similarity(&self, a: &str, b: &str) -> Result<f64> {
        let (va, na) = self
            .vector(a)
            .ok_or_else(|| MeveError::MissingEmbedding(a.to_string()))?;
        let (vb, nb) = self
            .vector(b)
            .ok_or_else(|| MeveError::MissingEmbedding(b.to_string()))?;
        Ok(cosine_with_norms(va, na, vb, nb))
    }

    /// The `min(k, N)` most similar chunks, similarity descending, ties by chunk id.
    pub fn knn(&self, query: &EmbeddingVector, k: usize) -> Result<Vec<Neighbor>> {
        if query.dims() != self.dims {
            return Err(MeveError::DimensionMismatch {
                expected: self.dims,
                actual: query.dims(),
            });
        }
        if k == 0 {
            return Err(MeveError::Config("k must be >= 1".into()));
        }
        let q = query.values();
        let qn = query.norm();
        let mut scored: Vec<(f64, usize)> = (0..self.len())
            .map(|i| (cosine_with_norms(q, qn, self.row(i), self.norms[i]), i))
            .collect();

        let cmp = |a: &(f64, usize), b: &(f64, usize)| neighbor_order(a.0, &self.ids[a.1], b.0, &self.ids[b.1]);
        let k = k.min(scored.len());
        if k < scored.len() {
            scored.select_nth_unstable_by(k - 1, cmp);
            scored.truncate(k);
        }
        scored.sort_unstable_by(cmp);
        Ok(scored
            .into_iter()
            .map(|(similarity, i)| Neighbor {
                chunk_id: self.ids[i].clone(),
                similarity,
            })
            .collect())
    }

    /// Header JSON line, then `N x D` little-endian f32 values.
    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let header = Header {
            dims: self.dims,
            count: self.len(),
            embedder: self.embedder.clone(),
        };
        let file = fs::File::create(path).map_err(|e| MeveError::io(path, e))?;
        let mut w = BufWriter::new(file);
        let io = |e| MeveError::io(path, e);
        w.write_all(serde_json::to_string(&header).expect("header serializes").as_bytes())
            .map_err(io)?;
        w.write_all(b"\n").map_err(io)?;
        for x in &self.data {
            w.write_all(&x.to_le_bytes()).map_err(io)?;
        }
        w.flush().map_err(io)
    }

    /// Load a persisted index; row ids come from the matching chunk store.
    pub fn load(path: impl AsRef<Path>, corpus: &Corpus) -> Result<Self> {
        let path = path.as_ref();
        let file = fs::File::open(path).map_err(|e| MeveError::io(path, e))?;
        let mut r = BufReader::new(file);
        let mut line = String::new();
        r.read_line(&mut line).map_err(|e| MeveError::io(path, e))?;
        let header: Header =
            serde_json::from_str(line.trim_end()).map_err(|e| MeveError::InvalidIndex(format!("bad header: {e}")))?;
        if header.count != corpus.len() {
            return Err(MeveError::InvalidIndex(format!(
                "index has {} rows but chunk store has {} chunks",
                header.count,
                corpus.len()
            )));
        }
        if header.dims != header.embedder.dims() {
            return Err(MeveError::InvalidIndex("header dims disagree with embedder".into()));
        }
        let mut bytes = Vec::new();
        r.read_to_end(&mut bytes).map_err(|e| MeveError::io(path, e))?;
        if bytes.len() != header.count * header.dims * 4 {
            return Err(MeveError::InvalidIndex(format!(
                "expected {} bytes of vector data, found {}",
                header.count * header.dims * 4,
                bytes.len()
            )));
        }
        let data = bytes
            .chunks_exact(4)
            .map(|b| f32::from_le_bytes([b[0], b[1], b[2], b[3]]))
            .collect();
        let ids = corpus.chunks().iter().map(|c| c.chunk_id.clone()).collect();
        Ok(Self::from_parts(header.embedder, header.dims, ids, data))
    }
}
