//! On-disk index directory: chunk store, dense vectors and BM25 index,
//! published atomically.

use std::fs;
use std::path::{Path, PathBuf};

use crate::bm25::Bm25Index;
use crate::corpus::Corpus;
use crate::error::{MeveError, Result};
use crate::vector_index::VectorIndex;

pub const CHUNKS_FILE: &str = "chunks.jsonl";
pub const VECTORS_FILE: &str = "vectors.idx";
pub const BM25_FILE: &str = "bm25.json";
pub const POSTINGS_FILE: &str = "bm25_postings.jsonl";

fn sibling(dir: &Path, tag: &str) -> PathBuf {
    let name = dir
        .file_name()
        .map_or_else(|| "index".into(), |n| n.to_string_lossy().into_owned());
    let parent = dir
        .parent()
        .filter(|p| !p.as_os_str().is_empty())
        .unwrap_or(Path::new("."));
    parent.join(format!(".{name}.{tag}-{}", std::process::id()))
}

fn write_all(dir: &Path, corpus: &Corpus, vectors: &VectorIndex, bm25: &Bm25Index) -> Result<()> {
    corpus.save_jsonl(dir.join(CHUNKS_FILE))?;
    vectors.save(dir.join(VECTORS_FILE))?;
    bm25.save(dir.join(BM25_FILE), dir.join(POSTINGS_FILE))
}

/// Write all index files into a temporary sibling directory, then rename it
/// over `dir`. On failure nothing is left at `dir` that was not there before.
pub fn write_index_dir(dir: impl AsRef<Path>, corpus: &Corpus, vectors: &VectorIndex, bm25: &Bm25Index) -> Result<()> {
    let dir = dir.as_ref();
    let tmp = sibling(dir, "tmp");
    if tmp.exists() {
        fs::remove_dir_all(&tmp).map_err(|e| MeveError::io(&tmp, e))?;
    }
    if let Some(parent) = tmp.parent() {
        fs::create_dir_all(parent).map_err(|e| MeveError::io(parent, e))?;
    }
    fs::create_dir(&tmp).map_err(|e| MeveError::io(&tmp, e))?;
    if let Err(e) = write_all(&tmp, corpus, vectors, bm25) {
        let _ = fs::remove_dir_all(&tmp);
        return Err(e);
    }

    let old = sibling(dir, "old");
    let had_previous = dir.exists();
    if had_previous {
        fs::rename(dir, &old).map_err(|e| MeveError::io(dir, e))?;
    }
    if let Err(e) = fs::rename(&tmp, dir) {
        if had_previous {
            let _ = fs::rename(&old, dir);
        }
        let _ = fs::remove_dir_all(&tmp);
        return Err(MeveError::io(dir, e));
    }
    if had_previous {
        fs::remove_dir_all(&old).map_err(|e| MeveError::io(&old, e))?;
    }
    Ok(())
}

pub fn load_index_dir(dir: impl AsRef<Path>) -> Result<(Corpus, VectorIndex, Bm25Index)> {
    let dir = dir.as_ref();
    if !dir.is_dir() {
        return Err(MeveError::io(
            dir,
            std::io::Error::new(std::io::ErrorKind::NotFound, "index directory not found"),
        ));
    }
    let corpus = Corpus::load_jsonl(dir.join(CHUNKS_FILE))?;
    let vectors = VectorIndex::load(dir.join(VECTORS_FILE), &corpus)?;
    let bm25 = Bm25Index::load(dir.join(BM25_FILE), dir.join(POSTINGS_FILE), &corpus)?;
    Ok((corpus, vectors, bm25))
}
