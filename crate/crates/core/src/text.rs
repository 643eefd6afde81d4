//! Small text helpers shared by the matching and scoring code.
//!
//! All offsets are UTF-8 byte offsets into the original string.

use serde::{Deserialize, Serialize};

/// Half-open byte range `[start, end)` into a narrative.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Span {
    pub start: usize,
    pub end: usize,
}

impl Span {
    pub fn new(start: usize, end: usize) -> Self {
        debug_assert!(start <= end);
        Span { start, end }
    }

    pub fn len(&self) -> usize {
        self.end - self.start
    }

    pub fn is_empty(&self) -> bool {
        self.start == self.end
    }

    pub fn slice<'a>(&self, text: &'a str) -> &'a str {
        &text[self.start..self.end]
    }

    pub fn contains(&self, other: &Span) -> bool {
        self.start <= other.start && other.end <= self.end
    }
}

/// A word token: a maximal run of alphanumeric characters.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Token<'a> {
    pub text: &'a str,
    pub span: Span,
}

pub fn word_tokens(text: &str) -> Vec<Token<'_>> {
    let mut out = Vec::new();
    let mut start: Option<usize> = None;
    for (i, c) in text.char_indices() {
        if c.is_alphanumeric() {
            if start.is_none() {
                start = Some(i);
            }
        } else if let Some(s) = start.take() {
            out.push(Token {
                text: &text[s..i],
                span: Span::new(s, i),
            });
        }
    }
    if let Some(s) = start {
        out.push(Token {
            text: &text[s..],
            span: Span::new(s, text.len()),
        });
    }
    out
}

pub fn casefold(s: &str) -> String {
    s.to_lowercase()
}

/// Lowercased word tokens, as owned strings.
pub fn folded_words(s: &str) -> Vec<String> {
    word_tokens(s).into_iter().map(|t| casefold(t.text)).collect()
}

/// Common English function words dropped before overlap scoring.
pub const STOPWORDS: &[&str] = &[
    "a", "an", "and", "are", "as", "at", "be", "been", "by", "for", "from", "has", "have", "he",
    "her", "his", "in", "is", "it", "its", "of", "on", "or", "she", "that", "the", "their", "there",
    "this", "to", "was", "were", "which", "with",
];

pub fn is_stopword(w: &str) -> bool {
    STOPWORDS.binary_search(&w).is_ok()
}

/// Turns `Some Term-Name` into `some-term-name`; used for minting IRI path segments.
pub fn slug(s: &str) -> String {
    let words = folded_words(s);
    if words.is_empty() {
        return "_".to_string();
    }
    words.join("-")
}

/// Turns `lab_test` or `lab test` into `LabTest`.
pub fn pascal_case(s: &str) -> String {
    word_tokens(s)
        .iter()
        .flat_map(|t| t.text.split('_'))
        .filter(|w| !w.is_empty())
        .map(|w| {
            let mut cs = w.chars();
            match cs.next() {
                Some(f) => f.to_uppercase().collect::<String>() + cs.as_str(),
                None => String::new(),
            }
        })
        .collect()
}
