//! Token counting for the budgeting phase.

mod bpe;

use std::path::PathBuf;

use serde::{Deserialize, Serialize};

pub use bpe::BpeCounter;

use crate::error::Result;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum TokenizerSpec {
    #[default]
    WhitespacePunct,
    BpeFiles {
        vocab_path: PathBuf,
        merges_path: PathBuf,
    },
}

/// A constructed token counter. Immutable, `Send + Sync`.
#[derive(Debug, Clone, Default)]
pub enum Tokenizer {
    #[default]
    WhitespacePunct,
    Bpe(Box<BpeCounter>),
}

impl Tokenizer {
    /// Load assets up front; a bad vocab or merges file fails here, never per call.
    pub fn from_spec(spec: &TokenizerSpec) -> Result<Self> {
        match spec {
            TokenizerSpec::WhitespacePunct => Ok(Tokenizer::WhitespacePunct),
            TokenizerSpec::BpeFiles {
                vocab_path,
                merges_path,
            } => Ok(Tokenizer::Bpe(Box::new(BpeCounter::from_files(
                vocab_path,
                merges_path,
            )?))),
        }
    }

    pub fn count_tokens(&self, text: &str) -> usize {
        match self {
            Tokenizer::WhitespacePunct => count_whitespace_punct(text),
            Tokenizer::Bpe(bpe) => bpe.count(text),
        }
    }
}

/// Maximal alphanumeric runs count as one token each; every other
/// non-whitespace character is a token of its own.
pub fn count_whitespace_punct(text: &str) -> usize {
    let mut count = 0;
    let mut in_word = false;
    for c in text.chars() {
        if c.is_alphanumeric() {
            if !in_word {
                count += 1;
                in_word = true;
            }
        } else {
            in_word = false;
            if !c.is_whitespace() {
                count += 1;
            }
        }
    }
    count
}

/// Lowercased alphanumeric runs, in text order, duplicates kept.
pub fn alnum_terms(text: &str) -> impl Iterator<Item = String> + '_ {
    text.split(|c: char| !c.is_alphanumeric())
        .filter(|s| !s.is_empty())
        .map(str::to_lowercase)
}
