//! Query-set evaluation across pipeline modes, the keyword-overlap grounding
//! proxy, report writers and a phase-scaling benchmark.

use std::collections::{BTreeMap, HashSet};
use std::fmt::Write as _;
use std::fs;
use std::io::{BufRead, BufReader};
use std::path::Path;

use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::corpus::{Chunk, Corpus};
use crate::embedding::EmbedderSpec;
use crate::error::{MeveError, Result};
use crate::pipeline::{Mode, Pipeline, PipelineConfig, QueryResult};
use crate::segment::split_sentences;
use crate::tokenizer::alnum_terms;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EvalQuery {
    pub qid: String,
    pub question: String,
}

#[derive(Deserialize)]
struct QueryLine {
    qid: Option<String>,
    question: String,
}

/// Read a JSONL query set. A missing `qid` becomes `q-<line number>`.
pub fn load_queries(path: impl AsRef<Path>) -> Result<Vec<EvalQuery>> {
    let path = path.as_ref();
    let file = fs::File::open(path).map_err(|e| MeveError::io(path, e))?;
    let mut out = Vec::new();
    for (idx, line) in BufReader::new(file).lines().enumerate() {
        let line_no = idx + 1;
        let line = line.map_err(|e| MeveError::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let q: QueryLine = serde_json::from_str(&line).map_err(|e| MeveError::Parse {
            line: line_no,
            message: e.to_string(),
        })?;
        if q.question.trim().is_empty() {
            return Err(MeveError::Parse {
                line: line_no,
                message: "question is empty".into(),
            });
        }
        out.push(EvalQuery {
            qid: q.qid.unwrap_or_else(|| format!("q-{line_no}")),
            question: q.question,
        });
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GroundingLabel {
    DerivedFromContext,
    NotDerivable,
    NoContext,
    /// The pipeline errored for this (query, mode) pair.
    Failed,
}

impl GroundingLabel {
    pub fn as_str(self) -> &'static str {
        match self {
            GroundingLabel::DerivedFromContext => "derived_from_context",
            GroundingLabel::NotDerivable => "not_derivable",
            GroundingLabel::NoContext => "no_context",
            GroundingLabel::Failed => "failed",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Grounding {
    pub answer_sentence: String,
    pub label: GroundingLabel,
    /// Distinct question keywords found in the winning sentence.
    pub overlap: usize,
}

/// Pick the context sentence sharing the most distinct lowercase keywords
/// with the question; the earliest sentence wins ties.
pub fn grounding_proxy(question: &str, context_text: &str) -> Grounding {
    if context_text.trim().is_empty() {
        return Grounding {
            answer_sentence: String::new(),
            label: GroundingLabel::NoContext,
            overlap: 0,
        };
    }
    let keywords: HashSet<String> = alnum_terms(question).collect();
    let mut best: Option<(&str, usize)> = None;
    // Blank lines separate packed chunks; split each block into sentences.
    for block in context_text.split("\n\n") {
        for sentence in split_sentences(block) {
            let terms: HashSet<String> = alnum_terms(sentence).collect();
            let overlap = terms.intersection(&keywords).count();
            if overlap > 0 && best.is_none_or(|(_, b)| overlap > b) {
                best = Some((sentence, overlap));
            }
        }
    }
    match best {
        Some((s, overlap)) => Grounding {
            answer_sentence: s.to_string(),
            label: GroundingLabel::DerivedFromContext,
            overlap,
        },
        None => Grounding {
            answer_sentence: String::new(),
            label: GroundingLabel::NotDerivable,
            overlap: 0,
        },
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EvalRecord {
    pub qid: String,
    pub mode: Mode,
    pub context_tokens: usize,
    pub retrieval_time_s: f64,
    pub grounding_label: GroundingLabel,
    pub answer_sentence: String,
    pub overlap: usize,
    pub c_all: usize,
    pub fallback_triggered: bool,
    pub error: Option<String>,
}

impl EvalRecord {
    fn from_result(qid: &str, result: &QueryResult) -> Self {
        let grounding = if result.mode == Mode::NoRag {
            Grounding {
                answer_sentence: String::new(),
                label: GroundingLabel::NoContext,
                overlap: 0,
            }
        } else {
            grounding_proxy(&result.question, &result.final_context.text)
        };
        Self {
            qid: qid.to_string(),
            mode: result.mode,
            context_tokens: result.final_context.total_tokens,
            retrieval_time_s: result.phase_timings.total,
            grounding_label: grounding.label,
            answer_sentence: grounding.answer_sentence,
            overlap: grounding.overlap,
            c_all: result.phase_counts.c_all,
            fallback_triggered: result.fallback_triggered,
            error: None,
        }
    }

    fn failed(qid: &str, mode: Mode, err: &MeveError) -> Self {
        Self {
            qid: qid.to_string(),
            mode,
            context_tokens: 0,
            retrieval_time_s: 0.0,
            grounding_label: GroundingLabel::Failed,
            answer_sentence: String::new(),
            overlap: 0,
            c_all: 0,
            fallback_triggered: false,
            error: Some(err.to_string()),
        }
    }

    pub fn is_failed(&self) -> bool {
        self.error.is_some()
    }
}

/// One record per (query, mode), ordered query-major. `jobs > 1` evaluates
/// pairs on a dedicated thread pool.
pub fn run_eval(queries: &[EvalQuery], modes: &[Mode], pipeline: &Pipeline, jobs: usize) -> Vec<EvalRecord> {
    let pairs: Vec<(&EvalQuery, Mode)> = queries
        .iter()
        .flat_map(|q| modes.iter().map(move |&m| (q, m)))
        .collect();
    let eval_one = |&(q, mode): &(&EvalQuery, Mode)| match pipeline.run_query_mode(&q.question, mode) {
        Ok(result) => EvalRecord::from_result(&q.qid, &result),
        Err(err) => EvalRecord::failed(&q.qid, mode, &err),
    };
    if jobs <= 1 {
        return pairs.iter().map(eval_one).collect();
    }
    match rayon::ThreadPoolBuilder::new().num_threads(jobs).build() {
        Ok(pool) => pool.install(|| pairs.par_iter().map(eval_one).collect()),
        Err(_) => pairs.iter().map(eval_one).collect(),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ModeSummary {
    pub records: usize,
    pub failed: usize,
    /// Means over non-failed records; `None` when every record failed.
    pub mean_context_tokens: Option<f64>,
    pub mean_retrieval_time_s: Option<f64>,
    pub grounding: BTreeMap<GroundingLabel, usize>,
}

pub type EvalSummary = BTreeMap<Mode, ModeSummary>;

pub fn summarize(records: &[EvalRecord]) -> Result<EvalSummary> {
    if records.is_empty() {
        return Err(MeveError::Config("cannot summarize an empty record set".into()));
    }
    let mut grouped: BTreeMap<Mode, Vec<&EvalRecord>> = BTreeMap::new();
    for r in records {
        grouped.entry(r.mode).or_default().push(r);
    }
    Ok(grouped
        .into_iter()
        .map(|(mode, rs)| {
            let ok: Vec<&&EvalRecord> = rs.iter().filter(|r| !r.is_failed()).collect();
            let mean = |f: &dyn Fn(&EvalRecord) -> f64| {
                (!ok.is_empty()).then(|| ok.iter().map(|r| f(r)).sum::<f64>() / ok.len() as f64)
            };
            let mut grounding = BTreeMap::new();
            for r in &rs {
                *grounding.entry(r.grounding_label).or_insert(0) += 1;
            }
            let summary = ModeSummary {
                records: rs.len(),
                failed: rs.len() - ok.len(),
                mean_context_tokens: mean(&|r| r.context_tokens as f64),
                mean_retrieval_time_s: mean(&|r| r.retrieval_time_s),
                grounding,
            };
            (mode, summary)
        })
        .collect())
}

pub const RECORD_COLUMNS: [&str; 7] = [
    "qid",
    "mode",
    "context_tokens",
    "retrieval_time_s",
    "grounding_label",
    "overlap_score",
    "error",
];

pub fn write_records_csv(records: &[EvalRecord], path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let to_err = |e: csv::Error| MeveError::Config(format!("{}: {e}", path.display()));
    let mut w = csv::Writer::from_path(path).map_err(to_err)?;
    w.write_record(RECORD_COLUMNS).map_err(to_err)?;
    for r in records {
        w.write_record([
            r.qid.as_str(),
            r.mode.as_str(),
            &r.context_tokens.to_string(),
            &r.retrieval_time_s.to_string(),
            r.grounding_label.as_str(),
            &r.overlap.to_string(),
            r.error.as_deref().unwrap_or(""),
        ])
        .map_err(to_err)?;
    }
    w.flush().map_err(|e| MeveError::io(path, e))
}

pub fn summary_json(summary: &EvalSummary) -> String {
    serde_json::to_string_pretty(summary).expect("summary serializes")
}

/// Markdown table with one row per mode.
pub fn summary_markdown(summary: &EvalSummary) -> String {
    let fmt = |v: Option<f64>, prec: usize| v.map_or("n/a".to_string(), |x| format!("{x:.prec$}"));
    let mut out = String::from(
        "| Mode | Queries | Context Eff. (Tokens) | Retrieval Time (s) | Derived from context | Not derivable | No context | Failed |\n\
         |---|---|---|---|---|---|---|---|\n",
    );
    for (mode, s) in summary {
        let n = |l| s.grounding.get(&l).copied().unwrap_or(0);
        let _ = writeln!(
            out,
            "| {} | {} | {} | {} | {} | {} | {} | {} |",
            mode,
            s.records,
            fmt(s.mean_context_tokens, 1),
            fmt(s.mean_retrieval_time_s, 4),
            n(GroundingLabel::DerivedFromContext),
            n(GroundingLabel::NotDerivable),
            n(GroundingLabel::NoContext),
            n(GroundingLabel::Failed),
        );
    }
    out
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BenchRow {
    pub n: usize,
    pub phase: &'static str,
    pub mean_time_s: f64,
}

#[derive(Debug, Clone)]
pub struct BenchSpec {
    pub sizes: Vec<usize>,
    pub dims: usize,
    pub k: usize,
    /// Queries timed per corpus size.
    pub queries: usize,
    pub seed: u64,
}

impl Default for BenchSpec {
    fn default() -> Self {
        Self {
            sizes: vec![10_000, 20_000, 40_000],
            dims: crate::embedding::DEFAULT_DIMS,
            k: crate::pipeline::DEFAULT_K,
            queries: 20,
            seed: 7,
        }
    }
}

const BENCH_VOCAB: usize = 5_000;

fn synthetic_word(rng: &mut StdRng) -> String {
    format!("w{}", rng.gen_range(0..BENCH_VOCAB))
}

fn synthetic_sentence(rng: &mut StdRng) -> String {
    let len = rng.gen_range(8..=16);
    let mut s = (0..len).map(|_| synthetic_word(rng)).collect::<Vec<_>>().join(" ");
    s.push('.');
    s
}

/// Random sentence corpus of `n` chunks over a fixed synthetic vocabulary.
pub fn synthetic_corpus(n: usize, seed: u64) -> Corpus {
    let mut rng = StdRng::seed_from_u64(seed);
    let chunks = (0..n)
        .map(|i| Chunk {
            chunk_id: format!("syn-{i:07}"),
            text: synthetic_sentence(&mut rng),
            source_title: "synthetic".into(),
            ordinal: 0,
        })
        .collect();
    Corpus::new(chunks).expect("synthetic ids are unique")
}

/// Mean per-phase wall-clock time of the full pipeline at each corpus size.
pub fn bench_scaling(spec: &BenchSpec) -> Result<Vec<BenchRow>> {
    let mut rows = Vec::new();
    for &n in &spec.sizes {
        let corpus = synthetic_corpus(n, spec.seed);
        let config = PipelineConfig {
            k: spec.k,
            embedder: EmbedderSpec::HashTf { dims: spec.dims },
            ..Default::default()
        };
        let pipeline = Pipeline::build(config, corpus)?;
        let mut rng = StdRng::seed_from_u64(spec.seed ^ 0x9e37_79b9);
        let questions: Vec<String> = (0..spec.queries.max(1))
            .map(|_| (0..4).map(|_| synthetic_word(&mut rng)).collect::<Vec<_>>().join(" "))
            .collect();
        // warm-up
        pipeline.run_query(&questions[0])?;
        let mut sums = [0.0f64; 5];
        for q in &questions {
            let t = pipeline.run_query(q)?.phase_timings;
            for (s, v) in sums.iter_mut().zip([
                t.dense_retrieval,
                t.verification,
                t.fallback,
                t.prioritization,
                t.budgeting,
            ]) {
                *s += v;
            }
        }
        let phases = [
            "dense_retrieval",
            "verification",
            "fallback",
            "prioritization",
            "budgeting",
        ];
        for (phase, sum) in phases.into_iter().zip(sums) {
            rows.push(BenchRow {
                n,
                phase,
                mean_time_s: sum / questions.len() as f64,
            });
        }
    }
    Ok(rows)
}

pub fn bench_csv(rows: &[BenchRow]) -> String {
    let mut out = String::from("n,phase,mean_time_s\n");
    for r in rows {
        let _ = writeln!(out, "{},{},{}", r.n, r.phase, r.mean_time_s);
    }
    out
}
