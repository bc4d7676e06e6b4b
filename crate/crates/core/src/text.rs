//! Tokenization and the sentence-level data model.

use std::fmt;
use std::ops::Deref;

use serde::{Deserialize, Serialize};

/// How a string is split into tokens.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TokenizerMode {
    /// Maximal runs of Unicode whitespace separate tokens.
    #[default]
    Whitespace,
    /// One token per non-whitespace character.
    Char,
}

/// A tokenized sentence. Tokens are never empty.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Default, Serialize, Deserialize)]
#[serde(transparent)]
pub struct TokenSeq(Vec<String>);

impl TokenSeq {
    pub fn new() -> Self {
        Self(Vec::new())
    }

    /// Builds a sequence from tokens, dropping empty ones.
    pub fn from_tokens<I, S>(tokens: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        Self(
            tokens
                .into_iter()
                .map(Into::into)
                .filter(|t: &String| !t.is_empty())
                .collect(),
        )
    }

    pub fn tokens(&self) -> &[String] {
        &self.0
    }

    pub fn into_tokens(self) -> Vec<String> {
        self.0
    }

    pub fn slice(&self, start: usize, end: usize) -> TokenSeq {
        TokenSeq(self.0[start..end].to_vec())
    }
}

impl Deref for TokenSeq {
    type Target = [String];

    fn deref(&self) -> &[String] {
        &self.0
    }
}

impl fmt::Display for TokenSeq {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&detokenize(self))
    }
}

impl<S: Into<String>> FromIterator<S> for TokenSeq {
    fn from_iter<I: IntoIterator<Item = S>>(iter: I) -> Self {
        TokenSeq::from_tokens(iter)
    }
}

pub fn tokenize(text: &str, mode: TokenizerMode) -> TokenSeq {
    match mode {
        TokenizerMode::Whitespace => TokenSeq(text.split_whitespace().map(str::to_owned).collect()),
        TokenizerMode::Char => TokenSeq(text.chars().filter(|c| !c.is_whitespace()).map(String::from).collect()),
    }
}

/// Joins tokens with a single space. Original spacing is not preserved.
pub fn detokenize(seq: &TokenSeq) -> String {
    seq.0.join(" ")
}

/// Collapses every whitespace run to one space and trims the ends.
pub fn normalize_spaces(text: &str) -> String {
    detokenize(&tokenize(text, TokenizerMode::Whitespace))
}

/// One source sentence and its candidate translations.
///
/// Candidate order matters: every argmax in the crate breaks ties towards
/// the lowest candidate index.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CandidatePool {
    pub id: String,
    pub source: String,
    pub candidates: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reference: Option<String>,
}

impl CandidatePool {
    pub fn new(id: impl Into<String>, source: impl Into<String>, candidates: Vec<String>) -> Self {
        Self {
            id: id.into(),
            source: source.into(),
            candidates,
            reference: None,
        }
    }

    pub fn with_reference(mut self, reference: impl Into<String>) -> Self {
        self.reference = Some(reference.into());
        self
    }

    pub fn len(&self) -> usize {
        self.candidates.len()
    }

    pub fn is_empty(&self) -> bool {
        self.candidates.is_empty()
    }

    /// Keeps the first `n` candidates in file order.
    pub fn truncated(&self, n: usize) -> CandidatePool {
        let mut pool = self.clone();
        pool.candidates.truncate(n);
        pool
    }

    pub(crate) fn ensure_non_empty(&self) -> crate::Result<()> {
        if self.candidates.is_empty() {
            return Err(crate::Error::contract(format!("pool `{}` has no candidates", self.id)));
        }
        Ok(())
    }
}
