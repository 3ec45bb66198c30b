//! Okapi BM25 over an inverted index, used for keyword fallback retrieval.
//!
//! ```text
//! score(q, d) = sum_{t in q} idf(t) * f(t,d) * (k1 + 1) / (f(t,d) + k1 * (1 - b + b * |d| / avgdl))
//! idf(t)      = ln(1 + (N - n_t + 0.5) / (n_t + 0.5))
//! ```
//!
//! Terms are lowercase whitespace-separated tokens; no stemming or stopwords.
//! Query terms are summed with multiplicity.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::fs;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::corpus::Corpus;
use crate::error::{MeveError, Result};
use crate::verification::{Origin, ScoredCandidate};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Bm25Params {
    pub k1: f64,
    pub b: f64,
}

impl Default for Bm25Params {
    fn default() -> Self {
        Self { k1: 1.5, b: 0.75 }
    }
}

impl Bm25Params {
    pub fn validate(&self) -> Result<()> {
        if !(self.k1 >= 0.0 && self.k1.is_finite()) {
            return Err(MeveError::Config(format!("bm25 k1 must be >= 0, got {}", self.k1)));
        }
        if !(0.0..=1.0).contains(&self.b) {
            return Err(MeveError::Config(format!("bm25 b must be in [0, 1], got {}", self.b)));
        }
        Ok(())
    }
}

pub fn bm25_terms(text: &str) -> impl Iterator<Item = String> + '_ {
    text.split_whitespace().map(str::to_lowercase)
}

#[derive(Debug, Clone)]
pub struct Bm25Index {
    params: Bm25Params,
    ids: Vec<String>,
    rows: HashMap<String, usize>,
    doc_len: Vec<u32>,
    avgdl: f64,
    /// term -> (row, term frequency), rows ascending
    postings: HashMap<String, Vec<(u32, u32)>>,
}

pub fn build_bm25(corpus: &Corpus, params: Bm25Params) -> Result<Bm25Index> {
    if corpus.is_empty() {
        return Err(MeveError::EmptyCorpus);
    }
    params.validate()?;
    let mut postings: HashMap<String, Vec<(u32, u32)>> = HashMap::new();
    let mut doc_len = Vec::with_capacity(corpus.len());
    for (row, chunk) in corpus.chunks().iter().enumerate() {
        let mut tf: HashMap<String, u32> = HashMap::new();
        let mut len = 0u32;
        for term in bm25_terms(&chunk.text) {
            *tf.entry(term).or_default() += 1;
            len += 1;
        }
        doc_len.push(len);
        for (term, f) in tf {
            postings.entry(term).or_default().push((row as u32, f));
        }
    }
    let ids: Vec<String> = corpus.chunks().iter().map(|c| c.chunk_id.clone()).collect();
    Ok(Bm25Index::from_parts(params, ids, doc_len, postings))
}

impl Bm25Index {
    fn from_parts(
        params: Bm25Params,
        ids: Vec<String>,
        doc_len: Vec<u32>,
        postings: HashMap<String, Vec<(u32, u32)>>,
    ) -> Self {
        let total: u64 = doc_len.iter().map(|&l| u64::from(l)).sum();
        let avgdl = total as f64 / doc_len.len() as f64;
        let rows = ids.iter().enumerate().map(|(i, id)| (id.clone(), i)).collect();
        Self {
            params,
            ids,
            rows,
            doc_len,
            avgdl,
            postings,
        }
    }

    pub fn params(&self) -> Bm25Params {
        self.params
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn avgdl(&self) -> f64 {
        self.avgdl
    }

    pub fn doc_len(&self, chunk_id: &str) -> Option<u32> {
        self.rows.get(chunk_id).map(|&r| self.doc_len[r])
    }

    /// Chunk ids containing `term`, in corpus order. Empty for unseen terms.
    pub fn postings(&self, term: &str) -> Vec<(&str, u32)> {
        self.postings
            .get(term)
            .map(|p| p.iter().map(|&(r, f)| (self.ids[r as usize].as_str(), f)).collect())
            .unwrap_or_default()
    }

    pub fn idf(&self, term: &str) -> f64 {
        let n_t = self.postings.get(term).map_or(0, Vec::len) as f64;
        let n = self.len() as f64;
        (1.0 + (n - n_t + 0.5) / (n_t + 0.5)).ln()
    }

    fn term_weight(&self, idf: f64, tf: u32, row: usize) -> f64 {
        let Bm25Params { k1, b } = self.params;
        let f = f64::from(tf);
        let len_norm = 1.0 - b + b * f64::from(self.doc_len[row]) / self.avgdl;
        idf * f * (k1 + 1.0) / (f + k1 * len_norm)
    }

    pub fn bm25_score(&self, query: &str, chunk_id: &str) -> Result<f64> {
        let row = *self
            .rows
            .get(chunk_id)
            .ok_or_else(|| MeveError::UnknownChunk(chunk_id.to_string()))?;
        let mut score = 0.0;
        for term in bm25_terms(query) {
            let Some(list) = self.postings.get(&term) else { continue };
            if let Ok(pos) = list.binary_search_by_key(&(row as u32), |&(r, _)| r) {
                score += self.term_weight(self.idf(&term), list[pos].1, row);
            }
        }
        Ok(score)
    }

    /// Scores for every chunk that contains at least one query term.
    fn score_all(&self, query: &str) -> HashMap<usize, f64> {
        let mut acc: HashMap<usize, f64> = HashMap::new();
        for term in bm25_terms(query) {
            let Some(list) = self.postings.get(&term) else { continue };
            let idf = self.idf(&term);
            for &(row, tf) in list {
                *acc.entry(row as usize).or_insert(0.0) += self.term_weight(idf, tf, row as usize);
            }
        }
        acc
    }

    /// Top `needed` chunks by BM25, excluding `exclude` and zero scores.
    /// Returned in (bm25 desc, chunk id asc) order with the raw BM25 score.
    pub fn top_matches(&self, query: &str, needed: usize, exclude: &HashSet<&str>) -> Vec<(String, f64)> {
        let mut hits: Vec<(usize, f64)> = self
            .score_all(query)
            .into_iter()
            .filter(|&(row, s)| s > 0.0 && !exclude.contains(self.ids[row].as_str()))
            .collect();
        hits.sort_by(|a, b| b.1.total_cmp(&a.1).then_with(|| self.ids[a.0].cmp(&self.ids[b.0])));
        hits.truncate(needed);
        hits.into_iter().map(|(row, s)| (self.ids[row].clone(), s)).collect()
    }

    /// Save metadata JSON and postings JSONL (one term record per line, terms sorted).
    pub fn save(&self, meta_path: impl AsRef<Path>, postings_path: impl AsRef<Path>) -> Result<()> {
        let meta_path = meta_path.as_ref();
        let postings_path = postings_path.as_ref();
        let meta = Meta {
            params: self.params,
            avgdl: self.avgdl,
            doc_len: self.ids.iter().cloned().zip(self.doc_len.iter().copied()).collect(),
        };
        fs::write(meta_path, serde_json::to_vec(&meta).expect("meta serializes"))
            .map_err(|e| MeveError::io(meta_path, e))?;

        let file = fs::File::create(postings_path).map_err(|e| MeveError::io(postings_path, e))?;
        let mut w = BufWriter::new(file);
        let mut terms: Vec<&String> = self.postings.keys().collect();
        terms.sort();
        for term in terms {
            let record = TermRecord {
                term: term.clone(),
                postings: self.postings[term]
                    .iter()
                    .map(|&(r, f)| (self.ids[r as usize].clone(), f))
                    .collect(),
            };
            let line = serde_json::to_string(&record).expect("record serializes");
            writeln!(w, "{line}").map_err(|e| MeveError::io(postings_path, e))?;
        }
        w.flush().map_err(|e| MeveError::io(postings_path, e))
    }

    pub fn load(meta_path: impl AsRef<Path>, postings_path: impl AsRef<Path>, corpus: &Corpus) -> Result<Self> {
        let meta_path = meta_path.as_ref();
        let postings_path = postings_path.as_ref();
        let raw = fs::read(meta_path).map_err(|e| MeveError::io(meta_path, e))?;
        let meta: Meta =
            serde_json::from_slice(&raw).map_err(|e| MeveError::InvalidIndex(format!("bm25 meta: {e}")))?;
        meta.params.validate()?;
        if meta.doc_len.len() != corpus.len() {
            return Err(MeveError::InvalidIndex(
                "bm25 doc_len does not match chunk store".into(),
            ));
        }
        let ids: Vec<String> = corpus.chunks().iter().map(|c| c.chunk_id.clone()).collect();
        let mut doc_len = Vec::with_capacity(ids.len());
        for id in &ids {
            let len = meta
                .doc_len
                .get(id)
                .ok_or_else(|| MeveError::InvalidIndex(format!("bm25 doc_len missing `{id}`")))?;
            doc_len.push(*len);
        }

        let file = fs::File::open(postings_path).map_err(|e| MeveError::io(postings_path, e))?;
        let mut postings = HashMap::new();
        for (idx, line) in BufReader::new(file).lines().enumerate() {
            let line = line.map_err(|e| MeveError::io(postings_path, e))?;
            if line.trim().is_empty() {
                continue;
            }
            let rec: TermRecord = serde_json::from_str(&line).map_err(|e| MeveError::Parse {
                line: idx + 1,
                message: e.to_string(),
            })?;
            let mut list = Vec::with_capacity(rec.postings.len());
            for (id, f) in rec.postings {
                let row = corpus.position(&id).ok_or(MeveError::UnknownChunk(id))?;
                list.push((row as u32, f));
            }
            list.sort_unstable();
            postings.insert(rec.term, list);
        }
        Ok(Self::from_parts(meta.params, ids, doc_len, postings))
    }
}

#[derive(Serialize, Deserialize)]
struct Meta {
    params: Bm25Params,
    avgdl: f64,
    doc_len: BTreeMap<String, u32>,
}

#[derive(Serialize, Deserialize)]
struct TermRecord {
    term: String,
    postings: Vec<(String, u32)>,
}

/// Keyword fallback: the top `needed` BM25 hits not in `exclude`, tagged
/// [`Origin::Fallback`] and scored `tau * bm25 / max_bm25_in_batch` so they
/// never outrank verified candidates.
pub fn fallback_retrieve(
    index: &Bm25Index,
    query: &str,
    needed: usize,
    exclude: &HashSet<&str>,
    tau: f64,
) -> Vec<ScoredCandidate> {
    let hits = index.top_matches(query, needed, exclude);
    let max = hits.first().map_or(0.0, |h| h.1);
    hits.into_iter()
        .map(|(id, s)| ScoredCandidate::new(id, tau * s / max, Origin::Fallback))
        .collect()
}
