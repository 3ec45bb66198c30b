//! Rule-based sentence splitting.
//!
//! A boundary is placed after a run of `.`, `!` or `?` (plus any closing
//! quotes or brackets) when it is followed by whitespace and then an
//! uppercase letter or a digit. A period ending a known abbreviation never
//! ends a sentence. Since whitespace is required after the terminator,
//! decimals such as `3.14` are never split.

const TERMINATORS: &[char] = &['.', '!', '?'];
const CLOSERS: &[char] = &['"', '\'', ')', ']', '}', '\u{201d}', '\u{2019}', '\u{bb}'];

const ABBREVIATIONS: &[&str] = &[
    "mr.", "mrs.", "ms.", "dr.", "prof.", "sr.", "jr.", "st.", "mt.", "ft.", "vs.", "etc.", "e.g.", "i.e.", "cf.",
    "al.", "inc.", "ltd.", "co.", "corp.", "no.", "vol.", "fig.", "gen.", "col.", "lt.", "sgt.", "capt.", "gov.",
    "sen.", "rep.", "rev.", "u.s.", "u.k.", "approx.", "jan.", "feb.", "mar.", "apr.", "jun.", "jul.", "aug.", "sep.",
    "sept.", "oct.", "nov.", "dec.",
];

/// Split `text` into trimmed, non-empty sentences in document order.
pub fn split_sentences(text: &str) -> Vec<&str> {
    let chars: Vec<(usize, char)> = text.char_indices().collect();
    let mut out = Vec::new();
    let mut start = 0usize;
    let mut i = 0usize;

    while i < chars.len() {
        let (pos, c) = chars[i];
        if !TERMINATORS.contains(&c) {
            i += 1;
            continue;
        }
        let mut j = i;
        while j < chars.len() && TERMINATORS.contains(&chars[j].1) {
            j += 1;
        }
        let last_terminator = chars[j - 1].1;
        while j < chars.len() && CLOSERS.contains(&chars[j].1) {
            j += 1;
        }
        let end = chars.get(j).map_or(text.len(), |&(p, _)| p);

        let mut k = j;
        while k < chars.len() && chars[k].1.is_whitespace() {
            k += 1;
        }
        let followed_by_space = k > j;
        let next_starts_sentence = chars
            .get(k)
            .is_some_and(|&(_, n)| n.is_uppercase() || n.is_ascii_digit());

        if followed_by_space
            && next_starts_sentence
            && !(last_terminator == '.' && j - i == 1 && ends_with_abbreviation(text, start, pos))
        {
            push_trimmed(&mut out, &text[start..end]);
            start = end;
        }
        i = j.max(i + 1);
    }
    push_trimmed(&mut out, &text[start..]);
    out
}

/// Whether the word ending at the period at byte offset `dot` is a guarded
/// abbreviation.
fn ends_with_abbreviation(text: &str, sentence_start: usize, dot: usize) -> bool {
    let before = &text[sentence_start..dot];
    let word_start = before
        .rfind(char::is_whitespace)
        .map_or(0, |p| p + before[p..].chars().next().map_or(1, char::len_utf8));
    let word = before[word_start..].trim_start_matches(|c: char| !c.is_alphanumeric());
    if word.is_empty() {
        return false;
    }
    let candidate = format!("{}.", word.to_lowercase());
    ABBREVIATIONS.contains(&candidate.as_str())
}

fn push_trimmed<'a>(out: &mut Vec<&'a str>, s: &'a str) {
    let s = s.trim();
    if !s.is_empty() {
        out.push(s);
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn two_sentences() {
        assert_eq!(
            split_sentences("Paris is big. It is in France."),
            vec!["Paris is big.", "It is in France."]
        );
    }

    #[test]
    fn abbreviation_guard() {
        // "Dr." is followed by space + uppercase, which would split without the guard.
        assert_eq!(split_sentences("Dr. Smith arrived."), vec!["Dr. Smith arrived."]);
        assert_eq!(
            split_sentences("See e.g. Table 2 for details. Then stop."),
            vec!["See e.g. Table 2 for details.", "Then stop."]
        );
    }

    #[test]
    fn no_terminator() {
        assert_eq!(split_sentences("One sentence only"), vec!["One sentence only"]);
    }

    #[test]
    fn decimals_and_lowercase_continuations() {
        assert_eq!(
            split_sentences("Pi is 3.14 roughly. ok then"),
            vec!["Pi is 3.14 roughly. ok then"]
        );
        assert_eq!(
            split_sentences("It cost 5. 7 people paid."),
            vec!["It cost 5.", "7 people paid."]
        );
    }

    #[test]
    fn terminator_runs_and_closers() {
        assert_eq!(
            split_sentences("Really?! Yes. \"Done.\" Next one"),
            vec!["Really?!", "Yes. \"Done.\"", "Next one"]
        );
    }

    #[test]
    fn whitespace_only() {
        assert!(split_sentences("   \n\t ").is_empty());
        assert!(split_sentences("").is_empty());
    }

    proptest! {
        #[test]
        fn lossless_modulo_whitespace(text in "[A-Za-z0-9 .!?\n\"']{0,80}") {
            let sentences = split_sentences(&text);
            let joined: String = sentences.join(" ").chars().filter(|c| !c.is_whitespace()).collect();
            let original: String = text.chars().filter(|c| !c.is_whitespace()).collect();
            prop_assert_eq!(joined, original);
            for s in &sentences {
                prop_assert!(!s.trim().is_empty());
            }
            prop_assert_eq!(split_sentences(&text), sentences);
        }
    }
}
