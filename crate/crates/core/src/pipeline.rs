//! Five-phase context composition: dense retrieval, relevance verification,
//! keyword fallback, prioritization and token budgeting.

use std::collections::HashSet;
use std::fmt;
use std::str::FromStr;
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};

use crate::bm25::{fallback_retrieve, Bm25Index, Bm25Params};
use crate::budget::{pack, FinalContext, DEFAULT_SEPARATOR, DEFAULT_T_MAX};
use crate::corpus::Corpus;
use crate::embedding::{Embedder, EmbedderSpec};
use crate::error::{MeveError, Result};
use crate::prioritization::{prioritize, DEFAULT_THETA};
use crate::tokenizer::{Tokenizer, TokenizerSpec};
use crate::vector_index::VectorIndex;
use crate::verification::{verify, Origin, ScoredCandidate, Verifier, VerifierSpec, DEFAULT_TAU};

pub const DEFAULT_K: usize = 20;
pub const DEFAULT_N_MIN: usize = 3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Mode {
    FullMeve,
    StandardRag,
    NoVerification,
    NoFallback,
    NoRag,
}

impl Mode {
    pub const ALL: [Mode; 5] = [
        Mode::FullMeve,
        Mode::StandardRag,
        Mode::NoVerification,
        Mode::NoFallback,
        Mode::NoRag,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Mode::FullMeve => "FULL_MEVE",
            Mode::StandardRag => "STANDARD_RAG",
            Mode::NoVerification => "NO_VERIFICATION",
            Mode::NoFallback => "NO_FALLBACK",
            Mode::NoRag => "NO_RAG",
        }
    }

    pub fn allows_fallback(self) -> bool {
        matches!(self, Mode::FullMeve | Mode::NoVerification)
    }
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Mode {
    type Err = MeveError;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().replace('-', "_").as_str() {
            "full" | "full_meve" | "meve" => Ok(Mode::FullMeve),
            "standard_rag" | "standard" | "rag" => Ok(Mode::StandardRag),
            "no_verification" => Ok(Mode::NoVerification),
            "no_fallback" => Ok(Mode::NoFallback),
            "no_rag" => Ok(Mode::NoRag),
            _ => Err(MeveError::Config(format!(
                "unknown mode `{s}` (expected full, standard_rag, no_verification, no_fallback, no_rag)"
            ))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    pub k: usize,
    pub tau: f64,
    pub n_min: usize,
    pub theta: f64,
    pub t_max: usize,
    pub mode: Mode,
    pub embedder: EmbedderSpec,
    pub verifier: VerifierSpec,
    pub bm25: Bm25Params,
    pub tokenizer: TokenizerSpec,
    pub fallback_count_override: Option<usize>,
    pub separator: String,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            k: DEFAULT_K,
            tau: DEFAULT_TAU,
            n_min: DEFAULT_N_MIN,
            theta: DEFAULT_THETA,
            t_max: DEFAULT_T_MAX,
            mode: Mode::FullMeve,
            embedder: EmbedderSpec::default(),
            verifier: VerifierSpec::default(),
            bm25: Bm25Params::default(),
            tokenizer: TokenizerSpec::default(),
            fallback_count_override: None,
            separator: DEFAULT_SEPARATOR.to_string(),
        }
    }
}

impl PipelineConfig {
    pub fn validate(&self) -> Result<()> {
        let unit = |name: &str, v: f64| {
            if (0.0..=1.0).contains(&v) {
                Ok(())
            } else {
                Err(MeveError::Config(format!("{name} must be in [0, 1], got {v}")))
            }
        };
        if self.k == 0 {
            return Err(MeveError::Config("k must be >= 1".into()));
        }
        if self.t_max == 0 {
            return Err(MeveError::Config("t_max must be >= 1".into()));
        }
        if self.fallback_count_override == Some(0) {
            return Err(MeveError::Config("fallback_count_override must be >= 1".into()));
        }
        unit("tau", self.tau)?;
        unit("theta", self.theta)?;
        self.embedder.validate()?;
        self.bm25.validate()
    }

    /// Non-fatal configuration concerns.
    pub fn warnings(&self) -> Vec<String> {
        let mut out = Vec::new();
        if self.k < self.n_min {
            out.push(format!(
                "k ({}) < n_min ({}): dense retrieval alone can never satisfy the fallback threshold",
                self.k, self.n_min
            ));
        }
        out
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize)]
pub struct PhaseCounts {
    pub c_init: usize,
    pub c_ver: usize,
    pub c_fallback: usize,
    pub c_all: usize,
    pub c_prioritized: usize,
    pub c_packed: usize,
}

/// Wall-clock seconds per phase, plus the end-to-end total.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize)]
pub struct PhaseTimings {
    pub dense_retrieval: f64,
    pub verification: f64,
    pub fallback: f64,
    pub prioritization: f64,
    pub budgeting: f64,
    pub total: f64,
}

impl PhaseTimings {
    pub fn phase_sum(&self) -> f64 {
        self.dense_retrieval + self.verification + self.fallback + self.prioritization + self.budgeting
    }
}

/// Candidate sets as they left each phase.
#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct CandidateTrace {
    pub c_init: Vec<String>,
    pub c_ver: Vec<ScoredCandidate>,
    pub c_fallback: Vec<ScoredCandidate>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct QueryResult {
    pub question: String,
    pub mode: Mode,
    pub final_context: FinalContext,
    pub phase_counts: PhaseCounts,
    pub phase_timings: PhaseTimings,
    pub fallback_triggered: bool,
    /// Ordered candidate list handed to budgeting.
    pub prioritized: Vec<ScoredCandidate>,
    pub trace: CandidateTrace,
}

impl QueryResult {
    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("query result serializes")
    }
}

/// Read-only pipeline over built indexes; safe to share across threads.
#[derive(Debug)]
pub struct Pipeline {
    config: PipelineConfig,
    corpus: Corpus,
    vectors: VectorIndex,
    bm25: Bm25Index,
    embedder: Embedder,
    verifier: Verifier,
    tokenizer: Tokenizer,
}

fn timed<T>(clock: &mut Duration, f: impl FnOnce() -> T) -> T {
    let start = Instant::now();
    let out = f();
    *clock += start.elapsed();
    out
}

impl Pipeline {
    pub fn new(config: PipelineConfig, corpus: Corpus, vectors: VectorIndex, bm25: Bm25Index) -> Result<Self> {
        config.validate()?;
        if vectors.len() != corpus.len() || bm25.len() != corpus.len() {
            return Err(MeveError::InvalidIndex(
                "indexes were not built over this corpus".into(),
            ));
        }
        if config.embedder.dims() != vectors.dims() {
            return Err(MeveError::Config(format!(
                "embedder produces {}-dimensional vectors but the index holds {}",
                config.embedder.dims(),
                vectors.dims()
            )));
        }
        let embedder = Embedder::from_spec(&config.embedder)?;
        let verifier = Verifier::from_spec(&config.verifier);
        let tokenizer = Tokenizer::from_spec(&config.tokenizer)?;
        Ok(Self {
            config,
            corpus,
            vectors,
            bm25,
            embedder,
            verifier,
            tokenizer,
        })
    }

    /// Build both indexes from a corpus.
    pub fn build(config: PipelineConfig, corpus: Corpus) -> Result<Self> {
        config.validate()?;
        let vectors = crate::vector_index::build_index(&corpus, &config.embedder)?;
        let bm25 = crate::bm25::build_bm25(&corpus, config.bm25)?;
        Self::new(config, corpus, vectors, bm25)
    }

    pub fn config(&self) -> &PipelineConfig {
        &self.config
    }

    pub fn corpus(&self) -> &Corpus {
        &self.corpus
    }

    pub fn vectors(&self) -> &VectorIndex {
        &self.vectors
    }

    pub fn bm25(&self) -> &Bm25Index {
        &self.bm25
    }

    pub fn tokenizer(&self) -> &Tokenizer {
        &self.tokenizer
    }

    pub fn run_query(&self, question: &str) -> Result<QueryResult> {
        self.run_query_mode(question, self.config.mode)
    }

    pub fn run_query_mode(&self, question: &str, mode: Mode) -> Result<QueryResult> {
        let cfg = &self.config;
        let started = Instant::now();
        let mut t = [Duration::ZERO; 5];
        let mut counts = PhaseCounts::default();
        let mut fallback_triggered = false;
        let mut trace = CandidateTrace::default();

        let prioritized: Vec<ScoredCandidate> = if mode == Mode::NoRag {
            Vec::new()
        } else {
            // Phase 1: dense kNN
            let neighbors = timed(&mut t[0], || -> Result<_> {
                let q = self.embedder.embed(question)?;
                self.vectors.knn(&q, cfg.k)
            })
            .map_err(|e| e.in_phase("dense_retrieval"))?;
            counts.c_init = neighbors.len();
            trace.c_init = neighbors.iter().map(|n| n.chunk_id.clone()).collect();

            if mode == Mode::StandardRag {
                let ranked: Vec<ScoredCandidate> = neighbors
                    .into_iter()
                    .map(|n| ScoredCandidate::new(n.chunk_id, n.similarity, Origin::Dense))
                    .collect();
                counts.c_ver = ranked.len();
                counts.c_all = ranked.len();
                counts.c_prioritized = ranked.len();
                trace.c_ver = ranked.clone();
                ranked
            } else {
                // Phase 2: relevance verification
                let c_ver = timed(&mut t[1], || -> Result<_> {
                    if mode == Mode::NoVerification {
                        return Ok(neighbors
                            .iter()
                            .map(|n| {
                                ScoredCandidate::new(n.chunk_id.clone(), (n.similarity + 1.0) / 2.0, Origin::Dense)
                            })
                            .collect());
                    }
                    let cands: Vec<(&str, &str)> = neighbors
                        .iter()
                        .map(|n| {
                            let text = self.corpus.get(&n.chunk_id).map_or("", |c| c.text.as_str());
                            (n.chunk_id.as_str(), text)
                        })
                        .collect();
                    verify(question, &cands, &self.verifier, cfg.tau)
                })
                .map_err(|e| e.in_phase("verification"))?;
                counts.c_ver = c_ver.len();
                trace.c_ver = c_ver.clone();

                // Phase 3: keyword fallback
                let c_all = timed(&mut t[2], || {
                    fallback_triggered = mode.allows_fallback() && c_ver.len() < cfg.n_min;
                    let mut c_all = c_ver;
                    if fallback_triggered {
                        let needed = cfg.fallback_count_override.unwrap_or(cfg.n_min - c_all.len());
                        let exclude: HashSet<&str> = c_all.iter().map(|c| c.chunk_id.as_str()).collect();
                        let extra = fallback_retrieve(&self.bm25, question, needed, &exclude, cfg.tau);
                        counts.c_fallback = extra.len();
                        trace.c_fallback = extra.clone();
                        c_all.extend(extra);
                    }
                    c_all
                });
                counts.c_all = c_all.len();

                // Phase 4: prioritization
                let ordered = timed(&mut t[3], || prioritize(c_all, cfg.theta, &self.vectors))
                    .map_err(|e| e.in_phase("prioritization"))?;
                counts.c_prioritized = ordered.len();
                ordered
            }
        };

        // Phase 5: budgeting
        let final_context = timed(&mut t[4], || {
            pack(&prioritized, &self.corpus, &self.tokenizer, cfg.t_max, &cfg.separator)
        })
        .map_err(|e| e.in_phase("budgeting"))?;
        counts.c_packed = final_context.chunk_ids.len();
        let total = started.elapsed();

        Ok(QueryResult {
            question: question.to_string(),
            mode,
            final_context,
            phase_counts: counts,
            phase_timings: PhaseTimings {
                dense_retrieval: t[0].as_secs_f64(),
                verification: t[1].as_secs_f64(),
                fallback: t[2].as_secs_f64(),
                prioritization: t[3].as_secs_f64(),
                budgeting: t[4].as_secs_f64(),
                total: total.as_secs_f64(),
            },
            fallback_triggered,
            prioritized,
            trace,
        })
    }
}

/// One-shot convenience over borrowed indexes.
pub fn run_query(
    question: &str,
    config: &PipelineConfig,
    vectors: &VectorIndex,
    bm25: &Bm25Index,
    corpus: &Corpus,
) -> Result<QueryResult> {
    let pipeline = Pipeline::new(config.clone(), corpus.clone(), vectors.clone(), bm25.clone())?;
    pipeline.run_query(question)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::RawDocument;

    fn pipeline(config: PipelineConfig) -> Pipeline {
        let docs = vec![
            RawDocument {
                doc_id: "eiffel".into(),
                title: "Eiffel Tower".into(),
                text: "The Eiffel Tower is in Paris. The tower height is 330 metres. It opened in 1889.".into(),
            },
            RawDocument {
                doc_id: "london".into(),
                title: "Tower of London".into(),
                text: "The Tower of London is a castle. It sits on the Thames.".into(),
            },
            RawDocument {
                doc_id: "misc".into(),
                title: "Misc".into(),
                text: "Bananas are yellow. Rivers flow downhill. Height records vary.".into(),
            },
        ];
        Pipeline::build(config, Corpus::from_documents(&docs).unwrap()).unwrap()
    }

    #[test]
    fn mode_parsing() {
        assert_eq!("full".parse::<Mode>().unwrap(), Mode::FullMeve);
        assert_eq!("NO_RAG".parse::<Mode>().unwrap(), Mode::NoRag);
        assert_eq!("no-verification".parse::<Mode>().unwrap(), Mode::NoVerification);
        assert!("bogus".parse::<Mode>().is_err());
        assert_eq!(serde_json::to_string(&Mode::StandardRag).unwrap(), "\"STANDARD_RAG\"");
    }

    #[test]
    fn config_validation() {
        assert!(PipelineConfig::default().validate().is_ok());
        let bad = PipelineConfig {
            tau: 1.5,
            ..Default::default()
        };
        assert!(bad.validate().is_err());
        let bad = PipelineConfig {
            k: 0,
            ..Default::default()
        };
        assert!(bad.validate().is_err());
        let warn = PipelineConfig {
            k: 2,
            ..Default::default()
        };
        assert_eq!(warn.warnings().len(), 1);
    }

    #[test]
    fn no_rag_is_empty() {
        let p = pipeline(PipelineConfig::default());
        let r = p.run_query_mode("eiffel tower height", Mode::NoRag).unwrap();
        assert_eq!(r.final_context.total_tokens, 0);
        assert_eq!(r.final_context.text, "");
        assert_eq!(r.phase_counts, PhaseCounts::default());
    }

    #[test]
    fn full_meve_tops_up_with_fallback() {
        let p = pipeline(PipelineConfig::default());
        let r = p.run_query_mode("eiffel tower height", Mode::FullMeve).unwrap();
        let c = r.phase_counts;
        assert!(c.c_ver <= c.c_init);
        assert_eq!(c.c_all, c.c_ver + c.c_fallback);
        assert!(c.c_packed <= c.c_prioritized && c.c_prioritized <= c.c_all);
        assert_eq!(r.fallback_triggered, c.c_ver < 3);
        assert!(r.final_context.total_tokens <= 512);
        assert!(r.final_context.chunk_ids.contains(&"eiffel#1".to_string()));
    }

    #[test]
    fn single_verified_chunk_triggers_fallback() {
        let p = pipeline(PipelineConfig::default());
        // only "The tower height is 330 metres." covers >= half of {tower, height, metres}
        let r = p.run_query_mode("tower height metres", Mode::FullMeve).unwrap();
        assert_eq!(r.phase_counts.c_ver, 1);
        assert!(r.fallback_triggered);
        assert!(r.phase_counts.c_fallback <= 2);
    }

    #[test]
    fn no_fallback_can_be_empty() {
        let cfg = PipelineConfig {
            tau: 1.0,
            ..Default::default()
        };
        let p = pipeline(cfg);
        let r = p.run_query_mode("eiffel bananas zeppelin", Mode::NoFallback).unwrap();
        assert!(!r.fallback_triggered);
        assert_eq!(r.final_context.total_tokens, 0);
        let full = p.run_query_mode("eiffel bananas zeppelin", Mode::FullMeve).unwrap();
        assert!(full.fallback_triggered);
        assert!(full.final_context.total_tokens > 0);
    }

    #[test]
    fn standard_rag_keeps_similarity_order() {
        let p = pipeline(PipelineConfig {
            k: 4,
            ..Default::default()
        });
        let r = p.run_query_mode("tower", Mode::StandardRag).unwrap();
        assert_eq!(r.phase_counts.c_init, 4);
        assert!(!r.fallback_triggered);
        assert!(r.prioritized.windows(2).all(|w| w[0].score >= w[1].score));
    }

    #[test]
    fn no_verification_keeps_everything_in_score_space() {
        let p = pipeline(PipelineConfig {
            k: 5,
            ..Default::default()
        });
        let r = p.run_query_mode("tower", Mode::NoVerification).unwrap();
        assert_eq!(r.phase_counts.c_ver, 5);
        assert!(!r.fallback_triggered);
        assert!(r.prioritized.iter().all(|c| (0.0..=1.0).contains(&c.score)));
    }

    #[test]
    fn result_json_shape() {
        let p = pipeline(PipelineConfig::default());
        let r = p.run_query("tower").unwrap();
        let v: serde_json::Value = serde_json::from_str(&r.to_json()).unwrap();
        assert_eq!(v["mode"], "FULL_MEVE");
        assert!(v["final_context"]["chunk_ids"].is_array());
        assert!(v["phase_counts"]["c_init"].is_u64());
        assert!(v["phase_timings"]["total"].is_f64());
        assert!(v["fallback_triggered"].is_boolean());
    }

    #[test]
    fn transport_errors_name_the_phase() {
        let corpus = pipeline(PipelineConfig::default()).corpus().clone();
        let mut cfg = PipelineConfig::default();
        let vectors = crate::vector_index::build_index(&corpus, &cfg.embedder).unwrap();
        let bm25 = crate::bm25::build_bm25(&corpus, cfg.bm25).unwrap();
        cfg.verifier = VerifierSpec::Remote {
            endpoint: "http://127.0.0.1:1".into(),
        };
        let err = run_query("tower", &cfg, &vectors, &bm25, &corpus).unwrap_err();
        assert!(err.is_transport());
        assert!(err.to_string().starts_with("phase verification failed"));
    }
}
