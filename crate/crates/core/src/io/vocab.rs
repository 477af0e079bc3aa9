use std::collections::HashMap;
use std::path::Path;

use crate::error::{Error, Result};
use crate::io::Lexicon;

/// Id of a subword unit. Id 0 is always the CTC blank.
pub type TokenId = u32;

pub const BLANK: TokenId = 0;

/// Marks a unit that starts a new word (sentencepiece convention).
pub const WORD_MARKER: char = '\u{2581}';

const BLANK_SYMBOL: &str = "<blank>";

/// The subword unit inventory of the acoustic model.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SubwordVocab {
    units: Vec<String>,
    unit_to_id: HashMap<String, TokenId>,
    max_unit_chars: usize,
    marked: bool,
}

impl SubwordVocab {
    /// Builds a vocabulary from an ordered unit list. Index 0 is the blank,
    /// whatever its spelling.
    pub fn new<S: Into<String>>(units: impl IntoIterator<Item = S>) -> Result<Self> {
        let units: Vec<String> = units.into_iter().map(Into::into).collect();
        if units.len() < 2 {
            return Err(Error::Config(format!(
                "vocabulary needs at least 2 units, got {}",
                units.len()
            )));
        }
        let mut unit_to_id = HashMap::with_capacity(units.len());
        for (id, unit) in units.iter().enumerate() {
            if unit.is_empty() {
                return Err(Error::Config(format!("unit {id} is empty")));
            }
            if unit_to_id.insert(unit.clone(), id as TokenId).is_some() {
                return Err(Error::Config(format!("duplicate unit {unit:?}")));
            }
        }
        let max_unit_chars = units[1..].iter().map(|u| u.chars().count()).max().unwrap_or(1);
        let marked = units[1..].iter().any(|u| u.starts_with(WORD_MARKER));
        Ok(SubwordVocab {
            units,
            unit_to_id,
            max_unit_chars,
            marked,
        })
    }

    /// Loads the one-unit-per-line format; line 0 must be `<blank>`.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text).map_err(|e| match e {
            Error::Config(msg) => Error::parse(path, 0, msg),
            other => other,
        })
    }

    pub fn parse(text: &str) -> Result<Self> {
        let units: Vec<&str> = text.lines().map(|l| l.trim_end_matches('\r')).collect();
        match units.first() {
            Some(&BLANK_SYMBOL) => {}
            Some(other) => {
                return Err(Error::Config(format!(
                    "first vocabulary line must be {BLANK_SYMBOL}, found {other:?}"
                )))
            }
            None => return Err(Error::Config("empty vocabulary".into())),
        }
        Self::new(units)
    }

    pub fn to_text(&self) -> String {
        let mut out = String::from(BLANK_SYMBOL);
        out.push('\n');
        for unit in &self.units[1..] {
            out.push_str(unit);
            out.push('\n');
        }
        out
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_text()).map_err(|e| Error::io(path, e))
    }

    pub fn len(&self) -> usize {
        self.units.len()
    }

    pub fn is_empty(&self) -> bool {
        self.units.is_empty()
    }

    pub fn blank(&self) -> TokenId {
        BLANK
    }

    pub fn unit(&self, id: TokenId) -> Option<&str> {
        self.units.get(id as usize).map(String::as_str)
    }

    pub fn id(&self, unit: &str) -> Option<TokenId> {
        self.unit_to_id.get(unit).copied()
    }

    pub fn units(&self) -> &[String] {
        &self.units
    }

    /// True when the inventory uses `▁` word-start markers.
    pub fn is_word_marked(&self) -> bool {
        self.marked
    }

    /// True when the unit begins a new word.
    pub fn starts_word(&self, id: TokenId) -> bool {
        self.unit(id).is_some_and(|u| u.starts_with(WORD_MARKER))
    }

    /// Greedy longest-match segmentation of one word. Marked vocabularies
    /// segment `▁WORD` so the first unit carries the word-start marker.
    pub fn segment(&self, word: &str) -> Result<Vec<TokenId>> {
        let surface = if self.marked {
            format!("{WORD_MARKER}{word}")
        } else {
            word.to_owned()
        };
        let chars: Vec<char> = surface.chars().collect();
        let mut out = Vec::new();
        let mut pos = 0;
        let mut piece = String::new();
        while pos < chars.len() {
            let longest = self.max_unit_chars.min(chars.len() - pos);
            let found = (1..=longest).rev().find_map(|len| {
                piece.clear();
                piece.extend(&chars[pos..pos + len]);
                match self.unit_to_id.get(piece.as_str()) {
                    Some(&id) if id != BLANK => Some((id, len)),
                    _ => None,
                }
            });
            match found {
                Some((id, len)) => {
                    out.push(id);
                    pos += len;
                }
                None => {
                    return Err(Error::UnsegmentableWord {
                        word: word.to_owned(),
                    })
                }
            }
        }
        if out.is_empty() {
            return Err(Error::UnsegmentableWord {
                word: word.to_owned(),
            });
        }
        Ok(out)
    }

    /// Concatenates unit spellings, turning word markers into spaces.
    pub fn detokenize(&self, tokens: &[TokenId]) -> String {
        let mut raw = String::new();
        for &t in tokens {
            if t == BLANK {
                continue;
            }
            if let Some(u) = self.unit(t) {
                raw.push_str(u);
            }
        }
        let spaced = raw.replace(WORD_MARKER, " ");
        spaced.split_whitespace().collect::<Vec<_>>().join(" ")
    }

    /// Splits a token sequence into per-word runs (marked vocabularies only;
    /// an unmarked vocabulary yields one run).
    pub fn word_spans(&self, tokens: &[TokenId]) -> Vec<std::ops::Range<usize>> {
        let mut spans = Vec::new();
        let mut start = 0;
        for (i, &t) in tokens.iter().enumerate() {
            if i > start && self.starts_word(t) {
                spans.push(start..i);
                start = i;
            }
        }
        if start < tokens.len() {
            spans.push(start..tokens.len());
        }
        spans
    }
}

/// Tokenizes one uppercase word: its first lexicon pronunciation when present,
/// otherwise greedy longest-match over the vocabulary.
pub fn tokenize(word: &str, lexicon: &Lexicon, vocab: &SubwordVocab) -> Result<Vec<TokenId>> {
    if let Some(pron) = lexicon.pronunciations(word).and_then(|p| p.first()) {
        return Ok(pron.clone());
    }
    vocab.segment(word)
}

/// Tokenizes a multi-word phrase by concatenating its words' tokenizations.
pub fn tokenize_phrase(
    words: &[impl AsRef<str>],
    lexicon: &Lexicon,
    vocab: &SubwordVocab,
) -> Result<Vec<TokenId>> {
    let mut out = Vec::new();
    for w in words {
        out.extend(tokenize(w.as_ref(), lexicon, vocab)?);
    }
    Ok(out)
}
