//! Text normalization and the stopword list.
//!
//! Every transcript, bias term and reference passes through [`normalize`]:
//! uppercase, apostrophes kept, other punctuation removed, whitespace
//! collapsed. The `_` character is removed too, which keeps it free for
//! joining multi-word grammar units.

use std::collections::BTreeSet;
use std::path::Path;

use crate::error::{Error, Result};

/// Separator used when a multi-word term is compiled into a single grammar unit.
pub const JOIN_CHAR: char = '_';

const BUILTIN_STOPWORDS: &str = include_str!("../data/stopwords.txt");

pub fn normalize(text: &str) -> String {
    let mut out = String::with_capacity(text.len());
    for word in text.split_whitespace() {
        let cleaned: String = word
            .chars()
            .filter(|c| c.is_alphanumeric() || *c == '\'')
            .flat_map(char::to_uppercase)
            .collect();
        if cleaned.is_empty() {
            continue;
        }
        if !out.is_empty() {
            out.push(' ');
        }
        out.push_str(&cleaned);
    }
    out
}

/// Normalizes `text` and splits it into words.
pub fn words(text: &str) -> Vec<String> {
    normalize(text).split(' ').filter(|w| !w.is_empty()).map(str::to_owned).collect()
}

pub fn join_unit(words: &[String]) -> String {
    words.join(&JOIN_CHAR.to_string())
}

pub fn split_unit(unit: &str) -> Vec<&str> {
    unit.split(JOIN_CHAR).collect()
}

/// A set of uppercase stopwords.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Stopwords(BTreeSet<String>);

impl Stopwords {
    /// The English list shipped with the crate.
    pub fn builtin() -> Self {
        Self::parse(BUILTIN_STOPWORDS)
    }

    pub fn empty() -> Self {
        Stopwords(BTreeSet::new())
    }

    pub fn parse(text: &str) -> Self {
        Stopwords(
            text.lines()
                .map(normalize)
                .filter(|w| !w.is_empty())
                .collect(),
        )
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Ok(Self::parse(&text))
    }

    pub fn contains(&self, word: &str) -> bool {
        self.0.contains(word)
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

impl<S: Into<String>> FromIterator<S> for Stopwords {
    fn from_iter<I: IntoIterator<Item = S>>(iter: I) -> Self {
        Stopwords(iter.into_iter().map(|s| normalize(&s.into())).collect())
    }
}
