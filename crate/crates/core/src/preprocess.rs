//! Text cleaning, whitespace tokenization and vocabulary construction.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};
use unicode_general_category::{get_general_category, GeneralCategory};

use crate::error::{Error, Result};

pub const PAD: u32 = 0;
pub const UNK: u32 = 1;
pub const PAD_TOKEN: &str = "<pad>";
pub const UNK_TOKEN: &str = "<unk>";

fn is_letter(c: char) -> bool {
    matches!(
        get_general_category(c),
        GeneralCategory::UppercaseLetter
            | GeneralCategory::LowercaseLetter
            | GeneralCategory::TitlecaseLetter
            | GeneralCategory::ModifierLetter
            | GeneralCategory::OtherLetter
    )
}

// Vowel signs and viramas of the Dravidian scripts are combining marks.
fn is_combining_mark(c: char) -> bool {
    matches!(
        get_general_category(c),
        GeneralCategory::NonspacingMark | GeneralCategory::SpacingMark
    )
}

fn lower(c: char) -> char {
    let mut it = c.to_lowercase();
    match (it.next(), it.next()) {
        (Some(l), None) => l,
        _ => c,
    }
}

/// Lowercases and keeps letters (any script) plus the combining marks that
/// attach to them; every other code point becomes a word break. Runs of
/// breaks collapse to one space and the ends are trimmed.
pub fn clean(text: &str) -> String {
    let mut out = String::with_capacity(text.len());
    let mut prev_kept = false;
    let mut pending_space = false;
    for c in text.chars().map(lower) {
        let keep = is_letter(c) || (prev_kept && is_combining_mark(c));
        if keep {
            if pending_space && !out.is_empty() {
                out.push(' ');
            }
            pending_space = false;
            out.push(c);
        } else {
            pending_space = true;
        }
        prev_kept = keep;
    }
    out
}

/// Splits cleaned text on spaces. Empty pieces are never produced.
pub fn tokenize(clean_text: &str) -> Vec<String> {
    clean_text
        .split(' ')
        .filter(|t| !t.is_empty())
        .map(str::to_string)
        .collect()
}

pub fn clean_and_tokenize(text: &str) -> Vec<String> {
    tokenize(&clean(text))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(from = "VocabularyParts")]
pub struct Vocabulary {
    tokens: Vec<String>,
    /// Corpus frequency by index; zero for PAD and UNK.
    freqs: Vec<usize>,
    #[serde(skip)]
    index: HashMap<String, u32>,
}

#[derive(Deserialize)]
struct VocabularyParts {
    tokens: Vec<String>,
    freqs: Vec<usize>,
}

impl From<VocabularyParts> for Vocabulary {
    fn from(p: VocabularyParts) -> Self {
        Vocabulary::from_parts(p.tokens, p.freqs)
    }
}

impl Vocabulary {
    pub fn build<S: AsRef<str>>(docs: &[Vec<S>], min_freq: usize) -> Result<Self> {
        if min_freq == 0 {
            return Err(Error::invalid("min_freq must be at least 1"));
        }
        let mut counts: HashMap<&str, usize> = HashMap::new();
        for doc in docs {
            for t in doc {
                *counts.entry(t.as_ref()).or_insert(0) += 1;
            }
        }
        let mut kept: Vec<(&str, usize)> = counts.into_iter().filter(|&(_, n)| n >= min_freq).collect();
        kept.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(b.0)));

        let mut tokens = vec![PAD_TOKEN.to_string(), UNK_TOKEN.to_string()];
        let mut freqs = vec![0, 0];
        for (t, n) in kept {
            tokens.push(t.to_string());
            freqs.push(n);
        }
        Ok(Self::from_parts(tokens, freqs))
    }

    /// Rebuilds a vocabulary from its index-ordered token list.
    pub fn from_parts(tokens: Vec<String>, freqs: Vec<usize>) -> Self {
        let index = tokens
            .iter()
            .enumerate()
            .skip(2)
            .map(|(i, t)| (t.clone(), i as u32))
            .collect();
        Vocabulary { tokens, freqs, index }
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.len() <= 2
    }

    pub fn lookup(&self, token: &str) -> u32 {
        self.index.get(token).copied().unwrap_or(UNK)
    }

    pub fn token(&self, index: u32) -> Option<&str> {
        self.tokens.get(index as usize).map(String::as_str)
    }

    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }

    pub fn freq(&self, index: u32) -> usize {
        self.freqs.get(index as usize).copied().unwrap_or(0)
    }

    pub fn freqs(&self) -> &[usize] {
        &self.freqs
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn clean_strips_symbols_emoji_digits() {
        assert_eq!(clean("Trailer veratlevel!!! 👌👌 100%"), "trailer veratlevel");
        assert_eq!(clean(""), "");
        assert_eq!(clean("hello,world"), "hello world");
        assert_eq!(clean("  #KGF2   ROCKS  "), "kgf rocks");
    }

    #[test]
    fn clean_keeps_dravidian_scripts_intact() {
        for s in ["தமிழ் படம்", "മലയാളം സിനിമ", "ಕನ್ನಡ ಚಿತ್ರ"]
        {
            assert_eq!(clean(s), s);
        }
        assert_eq!(clean("ಸೂಪರ್👍🏽ಹಾಡು"), "ಸೂಪರ್ ಹಾಡು");
    }

    #[test]
    fn stray_marks_are_dropped() {
        // variation selector after a removed emoji, and a vowel sign with no base
        assert_eq!(clean("❤\u{fe0f} love"), "love");
        assert_eq!(clean("\u{0bbe}abc"), "abc");
    }

    #[test]
    fn tokenize_examples() {
        assert_eq!(tokenize("enna da idhu"), vec!["enna", "da", "idhu"]);
        assert!(tokenize("").is_empty());
    }

    #[test]
    fn vocab_examples() {
        let docs = vec![tokenize("a a b")];
        let v = Vocabulary::build(&docs, 1).unwrap();
        assert_eq!(v.tokens(), &["<pad>", "<unk>", "a", "b"]);
        let v = Vocabulary::build(&docs, 2).unwrap();
        assert_eq!(v.tokens(), &["<pad>", "<unk>", "a"]);
        assert_eq!(v.lookup("b"), UNK);
        assert_eq!(v.lookup("a"), 2);
    }

    #[test]
    fn vocab_ties_are_lexicographic() {
        let docs = vec![tokenize("z y x y z")];
        let v = Vocabulary::build(&docs, 1).unwrap();
        assert_eq!(v.tokens(), &["<pad>", "<unk>", "y", "z", "x"]);
    }

    #[test]
    fn empty_corpus_vocab() {
        let docs: Vec<Vec<String>> = vec![];
        let v = Vocabulary::build(&docs, 1).unwrap();
        assert_eq!(v.len(), 2);
        assert!(Vocabulary::build(&docs, 0).is_err());
    }

    #[test]
    fn reserved_tokens_never_collide() {
        let docs = vec![clean_and_tokenize("<pad> <unk> pad unk")];
        let v = Vocabulary::build(&docs, 1).unwrap();
        assert!(v.lookup("pad") >= 2);
        assert!(v.tokens()[2..].iter().all(|t| !t.starts_with('<')));
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(1000))]

        #[test]
        fn clean_is_idempotent_and_never_lengthens(s in "\\PC{0,40}") {
            let once = clean(&s);
            prop_assert_eq!(clean(&once), once.clone());
            prop_assert!(once.chars().count() <= s.chars().count());
            prop_assert!(!once.starts_with(' ') && !once.ends_with(' ') && !once.contains("  "));
            prop_assert!(once.chars().all(|c| c == ' ' || is_letter(c) || is_combining_mark(c)));
        }

        #[test]
        fn tokenize_round_trips_clean_text(s in "\\PC{0,40}") {
            let c = clean(&s);
            let toks = tokenize(&c);
            prop_assert!(toks.iter().all(|t| !t.is_empty()));
            prop_assert_eq!(toks.join(" "), c);
        }
    }
}
