use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use crate::error::{Error, Result};
use crate::io::{SubwordVocab, TokenId, BLANK};

/// Word to subword "pronunciations". Repeated words keep every distinct
/// tokenization in file order.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Lexicon {
    entries: BTreeMap<String, Vec<Vec<TokenId>>>,
}

impl Lexicon {
    pub fn add(&mut self, word: impl Into<String>, tokens: Vec<TokenId>) {
        let prons = self.entries.entry(word.into()).or_default();
        if !prons.contains(&tokens) {
            prons.push(tokens);
        }
    }

    pub fn pronunciations(&self, word: &str) -> Option<&[Vec<TokenId>]> {
        self.entries.get(word).map(Vec::as_slice)
    }

    pub fn contains(&self, word: &str) -> bool {
        self.entries.contains_key(word)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &[Vec<TokenId>])> {
        self.entries.iter().map(|(w, p)| (w.as_str(), p.as_slice()))
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn load(path: &Path, vocab: &SubwordVocab) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text, vocab).map_err(|(line, msg)| Error::parse(path, line, msg))
    }

    /// Parses `WORD<TAB>id id ...` lines. Errors carry the 1-based line number.
    pub fn parse(text: &str, vocab: &SubwordVocab) -> std::result::Result<Self, (usize, String)> {
        let mut lex = Lexicon::default();
        for (i, line) in text.lines().enumerate() {
            let lineno = i + 1;
            let line = line.trim_end_matches('\r');
            if line.trim().is_empty() {
                continue;
            }
            let (word, ids) = line
                .split_once('\t')
                .ok_or((lineno, "expected WORD<TAB>ids".to_string()))?;
            if word.is_empty() || word.chars().any(char::is_lowercase) {
                return Err((lineno, format!("word {word:?} must be non-empty uppercase")));
            }
            let mut tokens = Vec::new();
            for field in ids.split_whitespace() {
                let id: TokenId = field
                    .parse()
                    .map_err(|_| (lineno, format!("bad token id {field:?}")))?;
                if id == BLANK || id as usize >= vocab.len() {
                    return Err((lineno, format!("token id {id} out of range or blank")));
                }
                tokens.push(id);
            }
            if tokens.is_empty() {
                return Err((lineno, format!("word {word:?} has an empty pronunciation")));
            }
            lex.add(word, tokens);
        }
        Ok(lex)
    }

    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for (word, prons) in &self.entries {
            for pron in prons {
                let ids: Vec<String> = pron.iter().map(ToString::to_string).collect();
                let _ = writeln!(out, "{word}\t{}", ids.join(" "));
            }
        }
        out
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_text()).map_err(|e| Error::io(path, e))
    }
}
