//! On-disk artifacts: posteriors, vocabularies, lexicons, word counts, bias
//! lists, alternates and transcripts.

mod lexicon;
mod posterior;
mod vocab;

use std::collections::{BTreeMap, HashSet};
use std::fmt::Write as _;
use std::path::Path;

pub use lexicon::Lexicon;
pub use posterior::{
    load_posterior_dir, PosteriorMatrix, BINARY_EXT, BINARY_MAGIC, NORMALIZATION_TOLERANCE,
};
pub use vocab::{tokenize, tokenize_phrase, SubwordVocab, TokenId, BLANK, WORD_MARKER};

use crate::error::{Error, Result};
use crate::text::{normalize, words};

fn read(path: &Path) -> Result<String> {
    std::fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

fn write(path: &Path, text: &str) -> Result<()> {
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

/// Occurrence counts of words in the ASR training text.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct WordCounts {
    counts: BTreeMap<String, u64>,
}

impl WordCounts {
    pub fn get(&self, word: &str) -> u64 {
        self.counts.get(word).copied().unwrap_or(0)
    }

    pub fn set(&mut self, word: impl Into<String>, count: u64) {
        self.counts.insert(word.into(), count);
    }

    pub fn add(&mut self, word: &str, n: u64) {
        *self.counts.entry(word.to_owned()).or_default() += n;
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, u64)> {
        self.counts.iter().map(|(w, &c)| (w.as_str(), c))
    }

    pub fn len(&self) -> usize {
        self.counts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.counts.is_empty()
    }

    pub fn parse(text: &str, path: &Path) -> Result<Self> {
        let mut counts = BTreeMap::new();
        for (i, line) in text.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let (word, count) = line
                .split_once('\t')
                .ok_or_else(|| Error::parse(path, i + 1, "expected WORD<TAB>count"))?;
            let count: u64 = count
                .trim()
                .parse()
                .map_err(|_| Error::parse(path, i + 1, format!("bad count {count:?}")))?;
            *counts.entry(normalize(word)).or_default() += count;
        }
        Ok(WordCounts { counts })
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::parse(&read(path)?, path)
    }

    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for (w, c) in &self.counts {
            let _ = writeln!(out, "{w}\t{c}");
        }
        out
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        write(path, &self.to_text())
    }
}

impl<S: Into<String>> FromIterator<(S, u64)> for WordCounts {
    fn from_iter<I: IntoIterator<Item = (S, u64)>>(iter: I) -> Self {
        let mut wc = WordCounts::default();
        for (w, c) in iter {
            wc.add(&w.into(), c);
        }
        wc
    }
}

/// One entry of a bias list.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct BiasTerm {
    /// The line as written, trimmed.
    pub raw: String,
    /// Normalized uppercase words.
    pub words: Vec<String>,
}

impl BiasTerm {
    pub fn new(raw: &str) -> Option<Self> {
        let words = words(raw);
        (!words.is_empty()).then(|| BiasTerm {
            raw: raw.trim().to_owned(),
            words,
        })
    }

    /// Normalized text, words separated by single spaces.
    pub fn text(&self) -> String {
        self.words.join(" ")
    }

    pub fn is_phrase(&self) -> bool {
        self.words.len() > 1
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct BiasList {
    terms: Vec<BiasTerm>,
}

impl BiasList {
    /// Builds a list from raw lines, skipping blanks and keeping the first of
    /// any duplicates (compared after normalization).
    pub fn from_lines<S: AsRef<str>>(lines: impl IntoIterator<Item = S>) -> Self {
        let mut seen = HashSet::new();
        let terms = lines
            .into_iter()
            .filter_map(|l| BiasTerm::new(l.as_ref()))
            .filter(|t| seen.insert(t.words.clone()))
            .collect();
        BiasList { terms }
    }

    pub fn parse(text: &str) -> Self {
        Self::from_lines(text.lines())
    }

    pub fn load(path: &Path) -> Result<Self> {
        Ok(Self::parse(&read(path)?))
    }

    pub fn terms(&self) -> &[BiasTerm] {
        &self.terms
    }

    pub fn len(&self) -> usize {
        self.terms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.terms.is_empty()
    }

    /// Every distinct word of every term, in first-seen order.
    pub fn distinct_words(&self) -> Vec<&str> {
        let mut seen = HashSet::new();
        self.terms
            .iter()
            .flat_map(|t| t.words.iter())
            .map(String::as_str)
            .filter(|w| seen.insert(*w))
            .collect()
    }

    pub fn to_text(&self) -> String {
        self.terms.iter().map(|t| format!("{}\n", t.text())).collect()
    }
}

/// Alternate spellings keyed by normalized bias-term text.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Alternates {
    map: BTreeMap<String, Vec<String>>,
}

impl Alternates {
    pub fn insert(&mut self, term: &str, alternate: &str) {
        let term = normalize(term);
        let alt = normalize(alternate);
        if term.is_empty() || alt.is_empty() || alt == term {
            return;
        }
        let list = self.map.entry(term).or_default();
        if !list.contains(&alt) {
            list.push(alt);
        }
    }

    pub fn get(&self, term: &str) -> &[String] {
        self.map.get(term).map_or(&[], Vec::as_slice)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &[String])> {
        self.map.iter().map(|(t, a)| (t.as_str(), a.as_slice()))
    }

    pub fn len(&self) -> usize {
        self.map.values().map(Vec::len).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Parses `TERM<TAB>ALTERNATE` lines.
    pub fn parse(text: &str, path: &Path) -> Result<Self> {
        let mut alts = Alternates::default();
        for (i, line) in text.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let (term, alt) = line
                .split_once('\t')
                .ok_or_else(|| Error::parse(path, i + 1, "expected TERM<TAB>ALTERNATE"))?;
            alts.insert(term, alt);
        }
        Ok(alts)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::parse(&read(path)?, path)
    }

    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for (term, alts) in &self.map {
            for alt in alts {
                let _ = writeln!(out, "{term}\t{alt}");
            }
        }
        out
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        write(path, &self.to_text())
    }
}

/// Utterance id to normalized text.
pub type Transcripts = BTreeMap<String, String>;

/// Reads `utt_id<TAB>text` lines. N-best files
/// (`utt_id<TAB>rank<TAB>score<TAB>text`) are accepted too; only rank 1 is kept.
pub fn load_transcripts(path: &Path) -> Result<Transcripts> {
    parse_transcripts(&read(path)?, path)
}

pub fn parse_transcripts(text: &str, path: &Path) -> Result<Transcripts> {
    let mut out = BTreeMap::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split('\t').collect();
        let (id, text) = match fields[..] {
            [id, text] => (id, text),
            [id] => (id, ""),
            [id, rank, _score, text] => {
                if rank.trim() != "1" {
                    continue;
                }
                (id, text)
            }
            _ => return Err(Error::parse(path, i + 1, "expected utt_id<TAB>text")),
        };
        out.insert(id.trim().to_owned(), normalize(text));
    }
    Ok(out)
}

pub fn transcripts_to_text(transcripts: &Transcripts) -> String {
    transcripts.iter().map(|(id, t)| format!("{id}\t{t}\n")).collect()
}

pub fn save_transcripts(path: &Path, transcripts: &Transcripts) -> Result<()> {
    write(path, &transcripts_to_text(transcripts))
}
