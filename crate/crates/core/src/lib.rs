//! Context composition for retrieval-augmented generation.
//!
//! A query flows through five phases: dense kNN retrieval, relevance
//! verification, BM25 keyword fallback when too few candidates survive,
//! relevance ordering with redundancy removal, and greedy packing under a
//! token budget. [`pipeline::Pipeline`] ties the phases together; the
//! [`eval`] module runs query sets across ablation modes.

pub mod bm25;
pub mod budget;
pub mod cli;
pub mod corpus;
pub mod embedding;
pub mod error;
pub mod eval;
pub mod pipeline;
pub mod prioritization;
mod remote;
pub mod segment;
pub mod store;
pub mod tokenizer;
pub mod vector_index;
pub mod verification;

pub use bm25::{build_bm25, fallback_retrieve, Bm25Index, Bm25Params};
pub use budget::{pack, FinalContext};
pub use corpus::{chunk_document, load_corpus, Chunk, Corpus, RawDocument};
pub use embedding::{cosine, embed_hash_tf, embed_remote, EmbedderSpec, EmbeddingVector};
pub use error::{MeveError, Result};
pub use pipeline::{run_query, CandidateTrace, Mode, Pipeline, PipelineConfig, QueryResult};
pub use prioritization::prioritize;
pub use tokenizer::{Tokenizer, TokenizerSpec};
pub use vector_index::{build_index, Neighbor, VectorIndex};
pub use verification::{score_lexical, score_remote, sigmoid, verify, Origin, ScoredCandidate, VerifierSpec};
