//! Relevance ordering and embedding-based redundancy removal.

use std::cmp::Ordering;

use crate::error::{MeveError, Result};
use crate::vector_index::VectorIndex;
use crate::verification::ScoredCandidate;

pub const DEFAULT_THETA: f64 = 0.85;

/// Score descending, dense before fallback, then chunk id ascending.
pub fn priority_order(a: &ScoredCandidate, b: &ScoredCandidate) -> Ordering {
    b.score
        .total_cmp(&a.score)
        .then_with(|| a.origin.cmp(&b.origin))
        .then_with(|| a.chunk_id.cmp(&b.chunk_id))
}

/// Sort by priority, then drop any candidate whose cosine similarity to an
/// already retained candidate exceeds `theta`.
pub fn prioritize(mut c_all: Vec<ScoredCandidate>, theta: f64, index: &VectorIndex) -> Result<Vec<ScoredCandidate>> {
    c_all.sort_by(priority_order);

    let mut vectors = Vec::with_capacity(c_all.len());
    for c in &c_all {
        let v = index
            .vector(&c.chunk_id)
            .ok_or_else(|| MeveError::MissingEmbedding(c.chunk_id.clone()))?;
        vectors.push(v);
    }

    let mut kept: Vec<usize> = Vec::with_capacity(c_all.len());
    for (i, &(v, n)) in vectors.iter().enumerate() {
        let redundant = kept.iter().any(|&j| {
            let (u, m) = vectors[j];
            crate::embedding::cosine_with_norms(v, n, u, m) > theta
        });
        if !redundant {
            kept.push(i);
        }
    }

    let mut keep = vec![false; c_all.len()];
    for i in kept {
        keep[i] = true;
    }
    let mut flags = keep.into_iter();
    c_all.retain(|_| flags.next().unwrap_or(false));
    Ok(c_all)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::embedding::{EmbedderSpec, EmbeddingVector};
    use crate::verification::Origin;

    fn index(entries: &[(&str, [f32; 3])]) -> VectorIndex {
        VectorIndex::from_vectors(
            EmbedderSpec::HashTf { dims: 3 },
            entries
                .iter()
                .map(|(id, v)| (id.to_string(), EmbeddingVector::new(v.to_vec())))
                .collect(),
        )
        .unwrap()
    }

    fn ids(v: &[ScoredCandidate]) -> Vec<&str> {
        v.iter().map(|c| c.chunk_id.as_str()).collect()
    }

    #[test]
    fn sorts_by_score() {
        let idx = index(&[("A", [1.0, 0.0, 0.0]), ("B", [0.0, 1.0, 0.0]), ("C", [0.0, 0.0, 1.0])]);
        let input = vec![
            ScoredCandidate::new("A", 0.9, Origin::Dense),
            ScoredCandidate::new("B", 0.8, Origin::Dense),
            ScoredCandidate::new("C", 0.85, Origin::Dense),
        ];
        assert_eq!(ids(&prioritize(input, 0.85, &idx).unwrap()), vec!["A", "C", "B"]);
    }

    #[test]
    fn removes_duplicate_embedding() {
        let idx = index(&[("A", [1.0, 0.0, 0.0]), ("B", [1.0, 0.0, 0.0]), ("C", [0.0, 0.0, 1.0])]);
        let input = vec![
            ScoredCandidate::new("A", 0.9, Origin::Dense),
            ScoredCandidate::new("B", 0.8, Origin::Dense),
            ScoredCandidate::new("C", 0.85, Origin::Dense),
        ];
        assert_eq!(ids(&prioritize(input.clone(), 0.85, &idx).unwrap()), vec!["A", "C"]);
        assert_eq!(ids(&prioritize(input, 1.0, &idx).unwrap()), vec!["A", "C", "B"]);
    }

    #[test]
    fn equality_at_threshold_retains() {
        // cos(A, B) = 0.6 exactly
        let idx = index(&[("A", [1.0, 0.0, 0.0]), ("B", [0.6, 0.8, 0.0])]);
        let input = vec![
            ScoredCandidate::new("A", 0.9, Origin::Dense),
            ScoredCandidate::new("B", 0.8, Origin::Dense),
        ];
        let sim = idx.similarity("A", "B").unwrap();
        assert_eq!(prioritize(input.clone(), sim, &idx).unwrap().len(), 2);
        assert_eq!(prioritize(input, sim - 1e-9, &idx).unwrap().len(), 1);
    }

    #[test]
    fn dense_wins_score_ties() {
        let idx = index(&[("a", [1.0, 0.0, 0.0]), ("b", [0.0, 1.0, 0.0])]);
        let input = vec![
            ScoredCandidate::new("a", 0.5, Origin::Fallback),
            ScoredCandidate::new("b", 0.5, Origin::Dense),
        ];
        assert_eq!(ids(&prioritize(input, 0.85, &idx).unwrap()), vec!["b", "a"]);
    }

    #[test]
    fn missing_embedding_names_chunk() {
        let idx = index(&[("a", [1.0, 0.0, 0.0])]);
        let input = vec![ScoredCandidate::new("zz", 0.5, Origin::Dense)];
        assert!(matches!(prioritize(input, 0.85, &idx), Err(MeveError::MissingEmbedding(id)) if id == "zz"));
    }
}
