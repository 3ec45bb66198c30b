//! Relevance verification: score each initial candidate and keep those at
//! or above the threshold.

use std::collections::HashSet;

use serde::{Deserialize, Serialize};

use crate::error::{MeveError, Result};
use crate::remote::JsonClient;
use crate::tokenizer::alnum_terms;

pub const DEFAULT_TAU: f64 = 0.5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Origin {
    Dense,
    Fallback,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ScoredCandidate {
    pub chunk_id: String,
    pub score: f64,
    pub origin: Origin,
}

impl ScoredCandidate {
    pub fn new(chunk_id: impl Into<String>, score: f64, origin: Origin) -> Self {
        Self {
            chunk_id: chunk_id.into(),
            score,
            origin,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum VerifierSpec {
    #[default]
    Lexical,
    Remote {
        endpoint: String,
    },
}

/// Numerically stable logistic function.
pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

fn distinct_terms(text: &str) -> HashSet<String> {
    alnum_terms(text).collect()
}

/// Fraction of distinct query terms present in the chunk.
pub fn score_lexical(query: &str, chunk_text: &str) -> f64 {
    let q = distinct_terms(query);
    if q.is_empty() {
        return 0.0;
    }
    let c = distinct_terms(chunk_text);
    q.iter().filter(|t| c.contains(*t)).count() as f64 / q.len() as f64
}

#[derive(Serialize)]
struct ScoreRequest<'a> {
    query: &'a str,
    documents: &'a [&'a str],
}

#[derive(Deserialize)]
struct ScoreResponse {
    logits: Vec<f64>,
}

/// Client for `POST <endpoint>/score`; logits are mapped through [`sigmoid`].
#[derive(Debug, Clone)]
pub struct RemoteScorer {
    client: JsonClient,
}

impl RemoteScorer {
    pub fn new(endpoint: &str) -> Self {
        Self {
            client: JsonClient::new(endpoint),
        }
    }

    pub fn score(&self, query: &str, documents: &[&str]) -> Result<Vec<f64>> {
        if documents.is_empty() {
            return Ok(Vec::new());
        }
        let resp: ScoreResponse = self.client.post("/score", &ScoreRequest { query, documents })?;
        if resp.logits.len() != documents.len() {
            return Err(MeveError::Protocol(format!(
                "sent {} documents, received {} logits",
                documents.len(),
                resp.logits.len()
            )));
        }
        if resp.logits.iter().any(|x| !x.is_finite()) {
            return Err(MeveError::Protocol("non-finite logit".into()));
        }
        Ok(resp.logits.into_iter().map(sigmoid).collect())
    }
}

pub fn score_remote(query: &str, chunk_texts: &[&str], spec: &VerifierSpec) -> Result<Vec<f64>> {
    match spec {
        VerifierSpec::Remote { endpoint } => RemoteScorer::new(endpoint).score(query, chunk_texts),
        VerifierSpec::Lexical => Err(MeveError::Config("score_remote requires a remote verifier spec".into())),
    }
}

#[derive(Debug, Clone)]
pub enum Verifier {
    Lexical,
    Remote(RemoteScorer),
}

impl Verifier {
    pub fn from_spec(spec: &VerifierSpec) -> Self {
        match spec {
            VerifierSpec::Lexical => Verifier::Lexical,
            VerifierSpec::Remote { endpoint } => Verifier::Remote(RemoteScorer::new(endpoint)),
        }
    }

    /// One relevance score in `[0, 1]` per text, in input order.
    pub fn score(&self, query: &str, texts: &[&str]) -> Result<Vec<f64>> {
        match self {
            Verifier::Lexical => Ok(texts.iter().map(|t| score_lexical(query, t)).collect()),
            Verifier::Remote(r) => r.score(query, texts),
        }
    }
}

/// Keep candidates with `score >= tau`, sorted by score descending then chunk id.
pub fn retain_verified(mut scored: Vec<ScoredCandidate>, tau: f64) -> Vec<ScoredCandidate> {
    scored.retain(|c| c.score >= tau);
    scored.sort_by(|a, b| b.score.total_cmp(&a.score).then_with(|| a.chunk_id.cmp(&b.chunk_id)));
    scored
}

/// Score `(chunk_id, text)` candidates and apply the threshold.
pub fn verify(query: &str, candidates: &[(&str, &str)], verifier: &Verifier, tau: f64) -> Result<Vec<ScoredCandidate>> {
    let texts: Vec<&str> = candidates.iter().map(|(_, t)| *t).collect();
    let scores = verifier.score(query, &texts)?;
    let scored = candidates
        .iter()
        .zip(scores)
        .map(|((id, _), s)| ScoredCandidate::new(*id, s, Origin::Dense))
        .collect();
    Ok(retain_verified(scored, tau))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::remote::testing::serve;

    #[test]
    fn sigmoid_properties() {
        assert_eq!(sigmoid(0.0), 0.5);
        for x in [-3.0, 1.0, 10.0] {
            assert!((sigmoid(x) - (1.0 - sigmoid(-x))).abs() < 1e-15);
        }
        let hi = sigmoid(700.0);
        assert!(hi > 0.0 && hi <= 1.0 && hi.is_finite());
        let lo = sigmoid(-700.0);
        assert!(lo > 0.0 && lo < 1.0);
    }

    #[test]
    fn lexical_examples() {
        assert_eq!(
            score_lexical("eiffel tower height", "the eiffel tower height is 330 metres"),
            1.0
        );
        assert_eq!(score_lexical("eiffel tower height", "paris demolitions in 1900"), 0.0);
        assert_eq!(score_lexical("eiffel tower", "the tower of london"), 0.5);
        assert_eq!(score_lexical("?!", "anything"), 0.0);
        assert_eq!(score_lexical("Tower TOWER tower", "tower"), 1.0);
    }

    #[test]
    fn boundary_is_inclusive() {
        let scored = vec![
            ScoredCandidate::new("a", 0.7, Origin::Dense),
            ScoredCandidate::new("b", 0.5, Origin::Dense),
            ScoredCandidate::new("c", 0.49, Origin::Dense),
        ];
        let kept: Vec<String> = retain_verified(scored.clone(), 0.5)
            .into_iter()
            .map(|c| c.chunk_id)
            .collect();
        assert_eq!(kept, vec!["a", "b"]);
        assert_eq!(retain_verified(scored, 0.0).len(), 3);
    }

    #[test]
    fn tau_one_with_partial_overlap_is_empty() {
        let cands = [("x", "the tower of london"), ("y", "eiffel")];
        let out = verify("eiffel tower", &cands, &Verifier::Lexical, 1.0).unwrap();
        assert!(out.is_empty());
    }

    #[test]
    fn sorted_with_id_tiebreak() {
        let cands = [("b", "cat"), ("a", "cat"), ("c", "cat dog")];
        let out = verify("cat dog", &cands, &Verifier::Lexical, 0.0).unwrap();
        let ids: Vec<&str> = out.iter().map(|c| c.chunk_id.as_str()).collect();
        assert_eq!(ids, vec!["c", "a", "b"]);
    }

    #[test]
    fn remote_applies_sigmoid() {
        let stub = serve(vec![
            (200, r#"{"logits":[0.0]}"#.into()),
            (200, r#"{"logits":[-2, 2]}"#.into()),
            (200, r#"{"logits":[1, 2, 3]}"#.into()),
        ]);
        let spec = VerifierSpec::Remote {
            endpoint: stub.url.clone(),
        };
        assert_eq!(score_remote("q", &["d"], &spec).unwrap(), vec![0.5]);
        let (path, body) = stub.requests.recv().unwrap();
        assert_eq!(path, "/score");
        let body: serde_json::Value = serde_json::from_str(&body).unwrap();
        assert_eq!(body, serde_json::json!({"query": "q", "documents": ["d"]}));

        let two = score_remote("q", &["a", "b"], &spec).unwrap();
        assert_eq!(two, vec![sigmoid(-2.0), sigmoid(2.0)]);
        assert!(two[0] < two[1]);

        let err = score_remote("q", &["a", "b", "c", "d"], &spec).unwrap_err();
        assert!(matches!(err, MeveError::Protocol(_)));
    }

    #[test]
    fn remote_transport_failure_is_an_error() {
        let verifier = Verifier::Remote(RemoteScorer::new("http://127.0.0.1:1"));
        let err = verify("q", &[("a", "text")], &verifier, 0.5).unwrap_err();
        assert!(err.is_transport());
    }
}
