//! Document loading, sentence chunking and the persisted chunk store.

use std::collections::{HashMap, HashSet};
use std::fs;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{MeveError, Result};
use crate::segment::split_sentences;

pub const DEFAULT_TITLE: &str = "untitled";

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RawDocument {
    pub doc_id: String,
    pub title: String,
    pub text: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Chunk {
    pub chunk_id: String,
    pub text: String,
    pub source_title: String,
    pub ordinal: usize,
}

/// Ordered chunk collection with unique ids.
#[derive(Debug, Clone, Default)]
pub struct Corpus {
    chunks: Vec<Chunk>,
    positions: HashMap<String, usize>,
}

#[derive(Deserialize)]
struct InputLine {
    id: Option<String>,
    title: Option<String>,
    text: String,
}

/// Read a JSONL document file. Blank lines are ignored.
pub fn load_corpus(path: impl AsRef<Path>) -> Result<Vec<RawDocument>> {
    let path = path.as_ref();
    let file = fs::File::open(path).map_err(|e| MeveError::io(path, e))?;
    let mut docs = Vec::new();
    for (idx, line) in BufReader::new(file).lines().enumerate() {
        let line_no = idx + 1;
        let line = line.map_err(|e| MeveError::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let parsed: InputLine = serde_json::from_str(&line).map_err(|e| MeveError::Parse {
            line: line_no,
            message: e.to_string(),
        })?;
        if parsed.text.trim().is_empty() {
            return Err(MeveError::Parse {
                line: line_no,
                message: "document text is empty".into(),
            });
        }
        docs.push(RawDocument {
            doc_id: parsed.id.unwrap_or_else(|| format!("doc-{line_no}")),
            title: parsed.title.unwrap_or_else(|| DEFAULT_TITLE.to_string()),
            text: parsed.text,
        });
    }
    if docs.is_empty() {
        return Err(MeveError::EmptyCorpus);
    }
    Ok(docs)
}

pub fn chunk_document(doc: &RawDocument) -> Vec<Chunk> {
    split_sentences(&doc.text)
        .into_iter()
        .enumerate()
        .map(|(ordinal, text)| Chunk {
            chunk_id: format!("{}#{}", doc.doc_id, ordinal),
            text: text.to_string(),
            source_title: doc.title.clone(),
            ordinal,
        })
        .collect()
}

/// Chunk documents in parallel; output keeps document order.
pub fn chunk_documents(docs: &[RawDocument]) -> Vec<Chunk> {
    docs.par_iter().flat_map_iter(chunk_document).collect()
}

impl Corpus {
    pub fn new(chunks: Vec<Chunk>) -> Result<Self> {
        let mut positions = HashMap::with_capacity(chunks.len());
        for (i, chunk) in chunks.iter().enumerate() {
            if positions.insert(chunk.chunk_id.clone(), i).is_some() {
                return Err(MeveError::DuplicateChunkId(chunk.chunk_id.clone()));
            }
        }
        Ok(Self { chunks, positions })
    }

    pub fn from_documents(docs: &[RawDocument]) -> Result<Self> {
        Self::new(chunk_documents(docs))
    }

    pub fn len(&self) -> usize {
        self.chunks.len()
    }

    pub fn is_empty(&self) -> bool {
        self.chunks.is_empty()
    }

    pub fn chunks(&self) -> &[Chunk] {
        &self.chunks
    }

    pub fn position(&self, chunk_id: &str) -> Option<usize> {
        self.positions.get(chunk_id).copied()
    }

    pub fn get(&self, chunk_id: &str) -> Option<&Chunk> {
        self.position(chunk_id).map(|i| &self.chunks[i])
    }

    pub fn chunk_ids(&self) -> HashSet<&str> {
        self.positions.keys().map(String::as_str).collect()
    }

    /// Write the chunk store, one JSON object per line.
    pub fn save_jsonl(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let file = fs::File::create(path).map_err(|e| MeveError::io(path, e))?;
        let mut w = BufWriter::new(file);
        for chunk in &self.chunks {
            let line = serde_json::to_string(chunk).expect("chunk serializes");
            writeln!(w, "{line}").map_err(|e| MeveError::io(path, e))?;
        }
        w.flush().map_err(|e| MeveError::io(path, e))
    }

    pub fn load_jsonl(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let file = fs::File::open(path).map_err(|e| MeveError::io(path, e))?;
        let mut chunks = Vec::new();
        for (idx, line) in BufReader::new(file).lines().enumerate() {
            let line = line.map_err(|e| MeveError::io(path, e))?;
            if line.trim().is_empty() {
                continue;
            }
            let chunk: Chunk = serde_json::from_str(&line).map_err(|e| MeveError::Parse {
                line: idx + 1,
                message: e.to_string(),
            })?;
            chunks.push(chunk);
        }
        Self::new(chunks)
    }
}
