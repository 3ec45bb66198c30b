//! `meve` command-line interface: `index`, `query`, `eval` and `bench`.
//!
//! Settings resolve in three layers: built-in defaults, then the JSON file
//! given by `--config`, then individual flags.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde::Deserialize;

use crate::bm25::{build_bm25, Bm25Params};
use crate::corpus::{load_corpus, Corpus};
use crate::embedding::EmbedderSpec;
use crate::error::{MeveError, Result};
use crate::eval::{
    bench_csv, bench_scaling, load_queries, run_eval, summarize, summary_json, summary_markdown, write_records_csv,
    BenchSpec,
};
use crate::pipeline::{Mode, Pipeline, PipelineConfig};
use crate::store::{load_index_dir, write_index_dir};
use crate::tokenizer::TokenizerSpec;
use crate::vector_index::build_index;
use crate::verification::VerifierSpec;

pub const EXIT_CONFIG: u8 = 2;
pub const EXIT_TRANSPORT: u8 = 3;
pub const EXIT_ALL_FAILED: u8 = 4;

#[derive(Debug, Parser)]
#[command(name = "meve", version, about = "Compose compact, verified retrieval contexts")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Chunk a JSONL corpus and build the vector and BM25 indexes.
    Index(IndexArgs),
    /// Run one question through the pipeline and print the result as JSON.
    Query(QueryArgs),
    /// Evaluate a query set across modes and write reports.
    Eval(EvalArgs),
    /// Time pipeline phases on synthetic corpora of increasing size.
    Bench(BenchArgs),
}

#[derive(Debug, Args)]
pub struct IndexArgs {
    /// JSONL corpus ({"id"?, "title"?, "text"} per line)
    pub corpus: Option<PathBuf>,
    /// Output index directory
    #[arg(long, short)]
    pub out: Option<PathBuf>,
    #[command(flatten)]
    pub shared: SharedArgs,
}

#[derive(Debug, Args)]
pub struct QueryArgs {
    pub index_dir: PathBuf,
    pub question: String,
    #[command(flatten)]
    pub shared: SharedArgs,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    pub index_dir: Option<PathBuf>,
    /// JSONL query set ({"qid", "question"} per line)
    #[arg(long)]
    pub queries: Option<PathBuf>,
    /// Comma-separated modes to evaluate
    #[arg(long, value_delimiter = ',', value_parser = parse_mode, default_value = "full,standard_rag,no_rag")]
    pub modes: Vec<Mode>,
    #[arg(long)]
    pub report_dir: Option<PathBuf>,
    /// Also write summary.md
    #[arg(long)]
    pub markdown: bool,
    #[command(flatten)]
    pub shared: SharedArgs,
}

#[derive(Debug, Args)]
pub struct BenchArgs {
    /// Comma-separated corpus sizes
    #[arg(long, value_delimiter = ',', default_value = "10000,20000,40000")]
    pub sizes: Vec<usize>,
    #[arg(long, default_value_t = crate::embedding::DEFAULT_DIMS)]
    pub dims: usize,
    #[arg(long, default_value_t = crate::pipeline::DEFAULT_K)]
    pub k: usize,
    /// Queries timed per size
    #[arg(long, default_value_t = 20)]
    pub queries: usize,
    #[arg(long, default_value_t = 7)]
    pub seed: u64,
    /// CSV output path (stdout when absent)
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum EmbedderFlag {
    Hash,
    Remote(String),
}

#[derive(Debug, Clone, Default, Args)]
pub struct SharedArgs {
    /// JSON config file using PipelineConfig field names
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub k: Option<usize>,
    #[arg(long)]
    pub tau: Option<f64>,
    #[arg(long)]
    pub nmin: Option<usize>,
    #[arg(long)]
    pub theta: Option<f64>,
    /// Token budget (T_max)
    #[arg(long)]
    pub budget: Option<usize>,
    #[arg(long, value_parser = parse_mode)]
    pub mode: Option<Mode>,
    /// `hash` or `remote:<url>`
    #[arg(long, value_parser = parse_embedder)]
    pub embedder: Option<EmbedderFlag>,
    /// Embedding dimensions
    #[arg(long)]
    pub dims: Option<usize>,
    /// `lexical` or `remote:<url>`
    #[arg(long, value_parser = parse_verifier)]
    pub verifier: Option<VerifierSpec>,
    /// `ws` or `bpe:<vocab.json>,<merges.txt>`
    #[arg(long, value_parser = parse_tokenizer)]
    pub tokenizer: Option<TokenizerSpec>,
    #[arg(long)]
    pub jobs: Option<usize>,
    /// Evaluate serially so timings are not skewed by concurrent work
    #[arg(long)]
    pub serial_timing: bool,
    /// Print a human-readable summary to stderr
    #[arg(long)]
    pub pretty: bool,
}

fn parse_mode(s: &str) -> std::result::Result<Mode, String> {
    s.parse::<Mode>().map_err(|e| e.to_string())
}

fn parse_embedder(s: &str) -> std::result::Result<EmbedderFlag, String> {
    match s {
        "hash" | "hash_tf" => Ok(EmbedderFlag::Hash),
        _ => match s.strip_prefix("remote:") {
            Some(url) if !url.is_empty() => Ok(EmbedderFlag::Remote(url.to_string())),
            _ => Err(format!("expected `hash` or `remote:<url>`, got `{s}`")),
        },
    }
}

fn parse_verifier(s: &str) -> std::result::Result<VerifierSpec, String> {
    match s {
        "lexical" => Ok(VerifierSpec::Lexical),
        _ => match s.strip_prefix("remote:") {
            Some(url) if !url.is_empty() => Ok(VerifierSpec::Remote {
                endpoint: url.to_string(),
            }),
            _ => Err(format!("expected `lexical` or `remote:<url>`, got `{s}`")),
        },
    }
}

fn parse_tokenizer(s: &str) -> std::result::Result<TokenizerSpec, String> {
    if s == "ws" || s == "whitespace_punct" {
        return Ok(TokenizerSpec::WhitespacePunct);
    }
    match s.strip_prefix("bpe:").and_then(|rest| rest.split_once(',')) {
        Some((vocab, merges)) if !vocab.is_empty() && !merges.is_empty() => Ok(TokenizerSpec::BpeFiles {
            vocab_path: vocab.into(),
            merges_path: merges.into(),
        }),
        _ => Err(format!("expected `ws` or `bpe:<vocab>,<merges>`, got `{s}`")),
    }
}

/// Contents of a `--config` file. Every field is optional.
#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConfigFile {
    pub k: Option<usize>,
    pub tau: Option<f64>,
    pub n_min: Option<usize>,
    pub theta: Option<f64>,
    pub t_max: Option<usize>,
    pub mode: Option<Mode>,
    pub embedder: Option<EmbedderSpec>,
    pub verifier: Option<VerifierSpec>,
    pub bm25: Option<Bm25Params>,
    pub tokenizer: Option<TokenizerSpec>,
    pub fallback_count_override: Option<usize>,
    pub separator: Option<String>,
    pub corpus: Option<PathBuf>,
    pub index_dir: Option<PathBuf>,
    pub queries: Option<PathBuf>,
    pub report_dir: Option<PathBuf>,
    pub jobs: Option<usize>,
}

impl ConfigFile {
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let raw = fs::read_to_string(path).map_err(|e| MeveError::io(path, e))?;
        serde_json::from_str(&raw).map_err(|e| MeveError::Config(format!("{}: {e}", path.display())))
    }
}

/// Fully resolved settings for one command.
#[derive(Debug, Clone, PartialEq)]
pub struct CliConfig {
    pub pipeline: PipelineConfig,
    /// Whether the embedder was chosen by file or flag rather than defaulted.
    pub embedder_explicit: bool,
    pub corpus: Option<PathBuf>,
    pub index_dir: Option<PathBuf>,
    pub queries: Option<PathBuf>,
    pub report_dir: Option<PathBuf>,
    pub jobs: usize,
}

/// Apply defaults, then `file`, then `flags`; validate the result.
pub fn resolve(file: Option<&ConfigFile>, flags: &SharedArgs) -> Result<CliConfig> {
    let mut p = PipelineConfig::default();
    let mut out = CliConfig {
        pipeline: PipelineConfig::default(),
        embedder_explicit: false,
        corpus: None,
        index_dir: None,
        queries: None,
        report_dir: None,
        jobs: 1,
    };

    if let Some(f) = file {
        macro_rules! take {
            ($($field:ident),*) => { $( if let Some(v) = f.$field.clone() { p.$field = v; } )* };
        }
        take!(k, tau, n_min, theta, t_max, mode, verifier, bm25, tokenizer, separator);
        if let Some(v) = f.fallback_count_override {
            p.fallback_count_override = Some(v);
        }
        if let Some(e) = &f.embedder {
            p.embedder = e.clone();
            out.embedder_explicit = true;
        }
        out.corpus = f.corpus.clone();
        out.index_dir = f.index_dir.clone();
        out.queries = f.queries.clone();
        out.report_dir = f.report_dir.clone();
        out.jobs = f.jobs.unwrap_or(1);
    }

    if let Some(v) = flags.k {
        p.k = v;
    }
    if let Some(v) = flags.tau {
        p.tau = v;
    }
    if let Some(v) = flags.nmin {
        p.n_min = v;
    }
    if let Some(v) = flags.theta {
        p.theta = v;
    }
    if let Some(v) = flags.budget {
        p.t_max = v;
    }
    if let Some(v) = flags.mode {
        p.mode = v;
    }
    if let Some(v) = &flags.verifier {
        p.verifier = v.clone();
    }
    if let Some(v) = &flags.tokenizer {
        p.tokenizer = v.clone();
    }
    let dims = flags.dims.unwrap_or(p.embedder.dims());
    match &flags.embedder {
        Some(EmbedderFlag::Hash) => p.embedder = EmbedderSpec::HashTf { dims },
        Some(EmbedderFlag::Remote(url)) => {
            p.embedder = EmbedderSpec::Remote {
                dims,
                endpoint: url.clone(),
            }
        }
        None => match &mut p.embedder {
            EmbedderSpec::HashTf { dims: d } | EmbedderSpec::Remote { dims: d, .. } => *d = dims,
        },
    }
    out.embedder_explicit |= flags.embedder.is_some() || flags.dims.is_some();
    if let Some(j) = flags.jobs {
        out.jobs = j;
    }
    if flags.serial_timing {
        out.jobs = 1;
    }
    out.jobs = out.jobs.max(1);

    p.validate()?;
    out.pipeline = p;
    Ok(out)
}

fn resolve_args(flags: &SharedArgs) -> Result<CliConfig> {
    let file = flags.config.as_ref().map(ConfigFile::load).transpose()?;
    let cfg = resolve(file.as_ref(), flags)?;
    for w in cfg.pipeline.warnings() {
        eprintln!("warning: {w}");
    }
    Ok(cfg)
}

fn exit_for(err: &MeveError) -> ExitCode {
    eprintln!("error: {err}");
    if err.is_transport() {
        ExitCode::from(EXIT_TRANSPORT)
    } else if err.is_config() {
        ExitCode::from(EXIT_CONFIG)
    } else {
        ExitCode::FAILURE
    }
}

fn required(path: Option<PathBuf>, what: &str) -> Result<PathBuf> {
    path.ok_or_else(|| MeveError::Config(format!("missing {what} (pass it as an argument or in --config)")))
}

fn load_pipeline(index_dir: &Path, cfg: &CliConfig) -> Result<Pipeline> {
    let (corpus, vectors, bm25) = load_index_dir(index_dir)?;
    let mut pipeline_cfg = cfg.pipeline.clone();
    if !cfg.embedder_explicit {
        pipeline_cfg.embedder = vectors.embedder().clone();
    }
    Pipeline::new(pipeline_cfg, corpus, vectors, bm25)
}

pub fn cmd_index(args: &IndexArgs) -> Result<()> {
    let cfg = resolve_args(&args.shared)?;
    let corpus_path = required(args.corpus.clone().or(cfg.corpus.clone()), "corpus path")?;
    let out = required(args.out.clone().or(cfg.index_dir.clone()), "output directory (--out)")?;
    let docs = load_corpus(&corpus_path)?;
    let corpus = Corpus::from_documents(&docs)?;
    let vectors = build_index(&corpus, &cfg.pipeline.embedder)?;
    let bm25 = build_bm25(&corpus, cfg.pipeline.bm25)?;
    write_index_dir(&out, &corpus, &vectors, &bm25)?;
    println!("{}", corpus.len());
    eprintln!(
        "indexed {} chunks from {} documents into {}",
        corpus.len(),
        docs.len(),
        out.display()
    );
    Ok(())
}

pub fn cmd_query(args: &QueryArgs) -> Result<()> {
    let cfg = resolve_args(&args.shared)?;
    let pipeline = load_pipeline(&args.index_dir, &cfg)?;
    let result = pipeline.run_query(&args.question)?;
    println!("{}", result.to_json());
    if args.shared.pretty {
        let c = result.phase_counts;
        eprintln!("mode:        {}", result.mode);
        eprintln!(
            "candidates:  init {} -> verified {} + fallback {} = {} -> prioritized {} -> packed {}",
            c.c_init, c.c_ver, c.c_fallback, c.c_all, c.c_prioritized, c.c_packed
        );
        eprintln!("fallback:    {}", result.fallback_triggered);
        eprintln!(
            "tokens:      {} / {}",
            result.final_context.total_tokens,
            pipeline.config().t_max
        );
        eprintln!("time:        {:.6} s", result.phase_timings.total);
        eprintln!("---\n{}", result.final_context.text);
    }
    Ok(())
}

/// Returns `Ok(false)` when every (query, mode) pair failed.
pub fn cmd_eval(args: &EvalArgs) -> Result<bool> {
    let cfg = resolve_args(&args.shared)?;
    let index_dir = required(args.index_dir.clone().or(cfg.index_dir.clone()), "index directory")?;
    let queries_path = required(args.queries.clone().or(cfg.queries.clone()), "query set (--queries)")?;
    let report_dir = required(
        args.report_dir.clone().or(cfg.report_dir.clone()),
        "report directory (--report-dir)",
    )?;

    let queries = load_queries(&queries_path)?;
    if queries.is_empty() {
        return Err(MeveError::Config(format!("{}: no queries", queries_path.display())));
    }
    let pipeline = load_pipeline(&index_dir, &cfg)?;
    let records = run_eval(&queries, &args.modes, &pipeline, cfg.jobs);
    let summary = summarize(&records)?;

    fs::create_dir_all(&report_dir).map_err(|e| MeveError::io(&report_dir, e))?;
    write_records_csv(&records, report_dir.join("records.csv"))?;
    let json_path = report_dir.join("summary.json");
    fs::write(&json_path, summary_json(&summary)).map_err(|e| MeveError::io(&json_path, e))?;
    let table = summary_markdown(&summary);
    if args.markdown {
        let md_path = report_dir.join("summary.md");
        fs::write(&md_path, &table).map_err(|e| MeveError::io(&md_path, e))?;
    }
    print!("{table}");
    for r in records.iter().filter(|r| r.is_failed()) {
        eprintln!("failed: {} {}: {}", r.qid, r.mode, r.error.as_deref().unwrap_or(""));
    }
    Ok(records.iter().any(|r| !r.is_failed()))
}

pub fn cmd_bench(args: &BenchArgs) -> Result<()> {
    let spec = BenchSpec {
        sizes: args.sizes.clone(),
        dims: args.dims,
        k: args.k,
        queries: args.queries,
        seed: args.seed,
    };
    if spec.dims == 0 || spec.k == 0 {
        return Err(MeveError::Config("--dims and --k must be >= 1".into()));
    }
    let csv = bench_csv(&bench_scaling(&spec)?);
    match &args.out {
        Some(path) => fs::write(path, csv).map_err(|e| MeveError::io(path, e)),
        None => {
            print!("{csv}");
            Ok(())
        }
    }
}

pub fn run(cli: Cli) -> ExitCode {
    let outcome = match &cli.command {
        Command::Index(a) => cmd_index(a).map(|_| true),
        Command::Query(a) => cmd_query(a).map(|_| true),
        Command::Eval(a) => cmd_eval(a),
        Command::Bench(a) => cmd_bench(a).map(|_| true),
    };
    match outcome {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => {
            eprintln!("error: every query failed");
            ExitCode::from(EXIT_ALL_FAILED)
        }
        Err(e) => exit_for(&e),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn three_layer_precedence() {
        let file: ConfigFile =
            serde_json::from_str(r#"{"k": 10, "tau": 0.7, "theta": 0.9, "embedder": {"kind": "hash_tf", "dims": 64}}"#)
                .unwrap();
        let flags = SharedArgs {
            tau: Some(0.3),
            budget: Some(128),
            ..Default::default()
        };
        let cfg = resolve(Some(&file), &flags).unwrap();
        let p = &cfg.pipeline;
        assert_eq!(p.tau, 0.3, "flag beats file");
        assert_eq!(p.k, 10, "file beats default");
        assert_eq!(p.theta, 0.9);
        assert_eq!(p.t_max, 128, "flag beats default");
        assert_eq!(p.n_min, 3, "default survives");
        assert_eq!(p.embedder, EmbedderSpec::HashTf { dims: 64 });
        assert!(cfg.embedder_explicit);

        let none = resolve(None, &SharedArgs::default()).unwrap();
        assert_eq!(none.pipeline, PipelineConfig::default());
        assert!(!none.embedder_explicit);
    }

    #[test]
    fn embedder_flag_keeps_file_dims() {
        let file: ConfigFile = serde_json::from_str(r#"{"embedder": {"kind": "hash_tf", "dims": 32}}"#).unwrap();
        let flags = SharedArgs {
            embedder: Some(EmbedderFlag::Remote("http://x".into())),
            ..Default::default()
        };
        let cfg = resolve(Some(&file), &flags).unwrap();
        assert_eq!(
            cfg.pipeline.embedder,
            EmbedderSpec::Remote {
                dims: 32,
                endpoint: "http://x".into()
            }
        );
    }

    #[test]
    fn invalid_resolved_config_is_rejected() {
        let flags = SharedArgs {
            tau: Some(2.0),
            ..Default::default()
        };
        assert!(resolve(None, &flags).unwrap_err().is_config());
        assert!(serde_json::from_str::<ConfigFile>(r#"{"kk": 1}"#).is_err());
    }

    #[test]
    fn flag_parsers() {
        assert_eq!(parse_embedder("hash").unwrap(), EmbedderFlag::Hash);
        assert!(parse_embedder("remote:").is_err());
        assert_eq!(
            parse_verifier("remote:http://h:1").unwrap(),
            VerifierSpec::Remote {
                endpoint: "http://h:1".into()
            }
        );
        assert_eq!(
            parse_tokenizer("bpe:v.json,m.txt").unwrap(),
            TokenizerSpec::BpeFiles {
                vocab_path: "v.json".into(),
                merges_path: "m.txt".into()
            }
        );
        assert!(parse_tokenizer("bpe:v.json").is_err());
        assert!(parse_mode("sideways").is_err());
    }

    #[test]
    fn serial_timing_forces_one_job() {
        let flags = SharedArgs {
            jobs: Some(8),
            serial_timing: true,
            ..Default::default()
        };
        assert_eq!(resolve(None, &flags).unwrap().jobs, 1);
    }

    #[test]
    fn clap_definition_is_valid() {
        use clap::CommandFactory;
        Cli::command().debug_assert();
    }
}
