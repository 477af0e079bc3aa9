use std::collections::BTreeMap;

use crate::io::{Alternates, BiasList};
use crate::text::{join_unit, Stopwords};

/// One grammar unit added or reweighted by biasing.
#[derive(Debug, Clone, PartialEq)]
pub struct PatchEntry {
    /// Grammar unit: a word, or a multi-word term joined with `_`.
    pub unit: String,
    pub lm_logprob: f64,
    /// Text emitted when the unit is decoded.
    pub replacement: String,
    pub is_alternate: bool,
}

/// Grammar entries to add or overwrite, keyed by unit.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct GrammarPatch {
    entries: BTreeMap<String, PatchEntry>,
}

impl GrammarPatch {
    pub fn get(&self, unit: &str) -> Option<&PatchEntry> {
        self.entries.get(unit)
    }

    pub fn entries(&self) -> impl Iterator<Item = &PatchEntry> {
        self.entries.values()
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    fn add(&mut self, entry: PatchEntry) {
        match self.entries.get_mut(&entry.unit) {
            None => {
                self.entries.insert(entry.unit.clone(), entry);
            }
            Some(existing) => {
                let replace = match (existing.is_alternate, entry.is_alternate) {
                    (true, false) => true,
                    (true, true) => entry.replacement < existing.replacement,
                    _ => false,
                };
                if replace {
                    *existing = entry;
                }
            }
        }
    }
}

/// Every bias word, joined phrase and alternate gets the fixed score `beta`.
/// Multi-word terms enter once as a joined unit and once per non-stopword word.
pub fn compile_grammar_patch(
    bias: &BiasList,
    alternates: &Alternates,
    beta: f64,
    stopwords: &Stopwords,
) -> GrammarPatch {
    let mut patch = GrammarPatch::default();
    for term in bias.terms() {
        let text = term.text();
        if term.is_phrase() {
            patch.add(PatchEntry {
                unit: join_unit(&term.words),
                lm_logprob: beta,
                replacement: text.clone(),
                is_alternate: false,
            });
        }
        for w in &term.words {
            if term.is_phrase() && stopwords.contains(w) {
                continue;
            }
            patch.add(PatchEntry {
                unit: w.clone(),
                lm_logprob: beta,
                replacement: w.clone(),
                is_alternate: false,
            });
        }
        for alt in alternates.get(&text) {
            let words: Vec<String> = alt.split(' ').map(str::to_owned).collect();
            patch.add(PatchEntry {
                unit: join_unit(&words),
                lm_logprob: beta,
                replacement: text.clone(),
                is_alternate: true,
            });
        }
    }
    patch
}
