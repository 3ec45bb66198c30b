//! Greedy first-fit packing of prioritized chunks under a token budget.

use serde::Serialize;

use crate::corpus::Corpus;
use crate::error::{MeveError, Result};
use crate::tokenizer::Tokenizer;
use crate::verification::ScoredCandidate;

pub const DEFAULT_T_MAX: usize = 512;
pub const DEFAULT_SEPARATOR: &str = "\n\n";

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct FinalContext {
    pub chunk_ids: Vec<String>,
    pub text: String,
    pub total_tokens: usize,
}

/// Walk candidates in priority order, appending each whole chunk whenever
/// the recounted concatenation stays within `t_max`. A chunk that does not
/// fit is skipped and packing continues with the next one.
pub fn pack(
    prioritized: &[ScoredCandidate],
    corpus: &Corpus,
    tokenizer: &Tokenizer,
    t_max: usize,
    separator: &str,
) -> Result<FinalContext> {
    let mut ctx = FinalContext {
        chunk_ids: Vec::new(),
        text: String::new(),
        total_tokens: 0,
    };
    for cand in prioritized {
        let chunk = corpus
            .get(&cand.chunk_id)
            .ok_or_else(|| MeveError::UnknownChunk(cand.chunk_id.clone()))?;
        let rollback = ctx.text.len();
        if !ctx.chunk_ids.is_empty() {
            ctx.text.push_str(separator);
        }
        ctx.text.push_str(&chunk.text);
        let tokens = tokenizer.count_tokens(&ctx.text);
        if tokens <= t_max {
            ctx.total_tokens = tokens;
            ctx.chunk_ids.push(chunk.chunk_id.clone());
        } else {
            ctx.text.truncate(rollback);
        }
    }
    Ok(ctx)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::Chunk;
    use crate::verification::Origin;

    fn setup(texts: &[&str]) -> (Corpus, Vec<ScoredCandidate>) {
        let corpus = Corpus::new(
            texts
                .iter()
                .enumerate()
                .map(|(i, t)| Chunk {
                    chunk_id: format!("c{i}"),
                    text: t.to_string(),
                    source_title: "t".into(),
                    ordinal: 0,
                })
                .collect(),
        )
        .unwrap();
        let cands = (0..texts.len())
            .map(|i| ScoredCandidate::new(format!("c{i}"), 1.0, Origin::Dense))
            .collect();
        (corpus, cands)
    }

    #[test]
    fn first_fit_exact() {
        // token counts 3, 2, 4 that stay additive under an empty separator
        let (corpus, cands) = setup(&["a b.", "c.", "d e f."]);
        let ctx = pack(&cands, &corpus, &Tokenizer::WhitespacePunct, 5, "").unwrap();
        assert_eq!(ctx.chunk_ids, vec!["c0", "c1"]);
        assert_eq!(ctx.total_tokens, 5);
    }

    #[test]
    fn skips_overflow() {
        let (corpus, cands) = setup(&["a b.", "c.", "d e f."]);
        let ctx = pack(&cands, &corpus, &Tokenizer::WhitespacePunct, 7, "").unwrap();
        assert_eq!(ctx.chunk_ids, vec!["c0", "c1"]);
        assert_eq!(ctx.total_tokens, 5);
    }

    #[test]
    fn skip_and_continue() {
        let (corpus, cands) = setup(&["a b c", "d e f g h", "i j"]);
        let ctx = pack(&cands, &corpus, &Tokenizer::WhitespacePunct, 6, " ").unwrap();
        assert_eq!(ctx.chunk_ids, vec!["c0", "c2"]);
        assert_eq!(ctx.text, "a b c i j");
    }

    #[test]
    fn oversized_first_chunk_is_skipped_not_truncated() {
        let (corpus, cands) = setup(&["one two three four", "five"]);
        let ctx = pack(&cands, &corpus, &Tokenizer::WhitespacePunct, 2, "\n\n").unwrap();
        assert_eq!(ctx.chunk_ids, vec!["c1"]);
        assert_eq!(ctx.text, "five");
    }

    #[test]
    fn separator_is_counted() {
        let (corpus, cands) = setup(&["a", "b"]);
        let ctx = pack(&cands, &corpus, &Tokenizer::WhitespacePunct, 2, " | ").unwrap();
        assert_eq!(ctx.chunk_ids, vec!["c0"]);
        let ctx = pack(&cands, &corpus, &Tokenizer::WhitespacePunct, 3, " | ").unwrap();
        assert_eq!(ctx.text, "a | b");
    }

    #[test]
    fn empty_input() {
        let (corpus, _) = setup(&["a"]);
        let ctx = pack(&[], &corpus, &Tokenizer::WhitespacePunct, 10, "\n\n").unwrap();
        assert_eq!(ctx.text, "");
        assert_eq!(ctx.total_tokens, 0);
        assert!(ctx.chunk_ids.is_empty());
    }
}
