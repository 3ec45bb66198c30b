//! Byte-level BPE token counting compatible with GPT-2 style
//! `vocab.json` / `merges.txt` assets.

use std::collections::HashMap;
use std::fs;
use std::path::Path;

use crate::error::{MeveError, Result};

#[derive(Debug, Clone)]
pub struct BpeCounter {
    ranks: HashMap<(String, String), usize>,
    byte_chars: [char; 256],
    vocab_size: usize,
}

impl BpeCounter {
    pub fn from_files(vocab_path: impl AsRef<Path>, merges_path: impl AsRef<Path>) -> Result<Self> {
        let vocab_path = vocab_path.as_ref();
        let merges_path = merges_path.as_ref();
        let vocab_raw = fs::read_to_string(vocab_path).map_err(|e| MeveError::io(vocab_path, e))?;
        let merges_raw = fs::read_to_string(merges_path).map_err(|e| MeveError::io(merges_path, e))?;
        Self::from_strs(&vocab_raw, &merges_raw)
    }

    pub fn from_strs(vocab_json: &str, merges_txt: &str) -> Result<Self> {
        let vocab: HashMap<String, u64> = serde_json::from_str(vocab_json)
            .map_err(|e| MeveError::Config(format!("vocabulary is not a token->id JSON object: {e}")))?;

        let mut ranks = HashMap::new();
        for (line_no, line) in merges_txt.lines().enumerate() {
            if line.starts_with('#') || line.trim().is_empty() {
                continue;
            }
            let mut parts = line.split(' ');
            match (parts.next(), parts.next(), parts.next()) {
                (Some(a), Some(b), None) if !a.is_empty() && !b.is_empty() => {
                    let rank = ranks.len();
                    ranks.entry((a.to_string(), b.to_string())).or_insert(rank);
                }
                _ => {
                    return Err(MeveError::Config(format!(
                        "merges line {}: expected two space-separated symbols",
                        line_no + 1
                    )))
                }
            }
        }

        Ok(Self {
            ranks,
            byte_chars: byte_to_unicode(),
            vocab_size: vocab.len(),
        })
    }

    pub fn vocab_size(&self) -> usize {
        self.vocab_size
    }

    pub fn merge_count(&self) -> usize {
        self.ranks.len()
    }

    pub fn count(&self, text: &str) -> usize {
        pretokenize(text).map(|piece| self.count_piece(piece)).sum()
    }

    fn count_piece(&self, piece: &str) -> usize {
        let mut symbols: Vec<String> = piece.bytes().map(|b| self.byte_chars[b as usize].to_string()).collect();

        while symbols.len() > 1 {
            let best = symbols
                .windows(2)
                .filter_map(|w| self.ranks.get(&(w[0].clone(), w[1].clone())))
                .min()
                .copied();
            let Some(best) = best else { break };

            let mut merged = Vec::with_capacity(symbols.len());
            let mut i = 0;
            while i < symbols.len() {
                if i + 1 < symbols.len() && self.ranks.get(&(symbols[i].clone(), symbols[i + 1].clone())) == Some(&best)
                {
                    merged.push(format!("{}{}", symbols[i], symbols[i + 1]));
                    i += 2;
                } else {
                    merged.push(std::mem::take(&mut symbols[i]));
                    i += 1;
                }
            }
            symbols = merged;
        }
        symbols.len()
    }
}

/// GPT-2's reversible byte -> printable char table.
fn byte_to_unicode() -> [char; 256] {
    let mut table = ['\0'; 256];
    let printable = |b: u32| (0x21..=0x7e).contains(&b) || (0xa1..=0xac).contains(&b) || (0xae..=0xff).contains(&b);
    let mut extra = 0u32;
    for b in 0u32..256 {
        let cp = if printable(b) {
            b
        } else {
            extra += 1;
            255 + extra
        };
        table[b as usize] = char::from_u32(cp).expect("valid code point");
    }
    table
}

#[derive(Clone, Copy, PartialEq)]
enum Class {
    Letter,
    Number,
    Other,
}

fn class_of(c: char) -> Option<Class> {
    if c.is_whitespace() {
        None
    } else if c.is_alphabetic() {
        Some(Class::Letter)
    } else if c.is_numeric() {
        Some(Class::Number)
    } else {
        Some(Class::Other)
    }
}

const CONTRACTIONS: &[&str] = &["'s", "'t", "'re", "'ve", "'m", "'ll", "'d"];

/// Hand-rolled equivalent of the GPT-2 pre-tokenization pattern
/// `'s|'t|'re|'ve|'m|'ll|'d| ?\p{L}+| ?\p{N}+| ?[^\s\p{L}\p{N}]+|\s+(?!\S)|\s+`.
fn pretokenize(text: &str) -> impl Iterator<Item = &str> {
    let mut pos = 0;
    std::iter::from_fn(move || {
        if pos >= text.len() {
            return None;
        }
        let rest = &text[pos..];
        let len = next_piece_len(rest);
        let piece = &rest[..len];
        pos += len;
        Some(piece)
    })
}

fn next_piece_len(rest: &str) -> usize {
    if let Some(c) = CONTRACTIONS.iter().find(|c| rest.starts_with(**c)) {
        return c.len();
    }

    let mut chars = rest.char_indices().peekable();
    let (_, first) = chars.next().expect("non-empty");

    // Optional single leading space glued to a following non-space run.
    let (class, body_start) = match class_of(first) {
        Some(class) => (Some(class), first.len_utf8()),
        None if first == ' ' => match rest[1..].chars().next().and_then(class_of) {
            Some(class) => (Some(class), 1 + rest[1..].chars().next().unwrap().len_utf8()),
            None => (None, 0),
        },
        None => (None, 0),
    };

    if let Some(class) = class {
        let mut end = body_start;
        for c in rest[body_start..].chars() {
            if class_of(c) != Some(class) {
                break;
            }
            end += c.len_utf8();
        }
        return end;
    }

    // Whitespace run. If non-whitespace follows, leave the last whitespace
    // char for the next piece (`\s+(?!\S)`), unless the run is a single char.
    let mut end = 0;
    let mut last_len = 0;
    for c in rest.chars() {
        if !c.is_whitespace() {
            break;
        }
        end += c.len_utf8();
        last_len = c.len_utf8();
    }
    let followed_by_text = end < rest.len();
    if followed_by_text && end > last_len {
        end - last_len
    } else {
        end
    }
}
