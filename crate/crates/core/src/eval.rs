//! Corpus WER and bias-term recall.
//!
//! Recall is counted per reference occurrence. A bias word occurrence is a
//! hit when the alignment matches it to the same word; a phrase occurrence is
//! a hit when all of its words are hit by consecutive alignment columns (no
//! insertion in between). Rare words are bias words with a training count
//! below the threshold, OOV words those with count zero, so
//! `oov ⊆ rare ⊆ word`.

use std::collections::{BTreeMap, HashSet};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::align::{align, Alignment, EditKind};
use crate::error::{Error, Result};
use crate::io::{BiasList, Transcripts, WordCounts};
use crate::text::{words, Stopwords};

pub const DEFAULT_RARE_THRESHOLD: u64 = 100;
pub const REPORT_SCHEMA: &str = "ctxbias-recall-report";
pub const REPORT_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct CategoryStats {
    pub occurrences: u64,
    pub hits: u64,
}

impl CategoryStats {
    /// `None` when there were no occurrences.
    pub fn recall(&self) -> Option<f64> {
        (self.occurrences > 0).then(|| self.hits as f64 / self.occurrences as f64)
    }

    fn record(&mut self, hit: bool) {
        self.occurrences += 1;
        self.hits += u64::from(hit);
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CategoryReport {
    pub occurrences: u64,
    pub hits: u64,
    pub recall: Option<f64>,
}

impl From<CategoryStats> for CategoryReport {
    fn from(s: CategoryStats) -> Self {
        CategoryReport {
            occurrences: s.occurrences,
            hits: s.hits,
            recall: s.recall(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TermKind {
    Word,
    Phrase,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TermReport {
    pub term: String,
    pub kind: TermKind,
    /// Training count of the word (phrases: `null`).
    pub training_count: Option<u64>,
    pub occurrences: u64,
    pub hits: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Categories {
    pub word: CategoryReport,
    pub phrase: CategoryReport,
    pub rare: CategoryReport,
    pub oov: CategoryReport,
}

/// Scoring result; serializes to the stable JSON report.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RecallReport {
    pub schema: String,
    pub version: u32,
    pub utterances: usize,
    pub ref_words: u64,
    pub errors: u64,
    pub wer: f64,
    pub rare_threshold: u64,
    pub categories: Categories,
    pub terms: Vec<TermReport>,
}

impl RecallReport {
    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("report serializes");
        s.push('\n');
        s
    }

    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::Config(format!("bad report JSON: {e}")))
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_json()).map_err(|e| Error::io(path, e))
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScoreOptions {
    pub rare_threshold: u64,
}

impl Default for ScoreOptions {
    fn default() -> Self {
        ScoreOptions {
            rare_threshold: DEFAULT_RARE_THRESHOLD,
        }
    }
}

/// Per-reference-position hit flags: the word was aligned to itself.
fn hits(a: &Alignment) -> Vec<bool> {
    let mut out = vec![false; a.reference.len()];
    for op in &a.ops {
        if let (EditKind::Match, Some(r)) = (op.kind, op.ref_word) {
            out[r] = true;
        }
    }
    out
}

/// Aligns every utterance and computes WER and recall. Hypothesis and
/// reference ids must match one to one.
pub fn score(
    hyps: &Transcripts,
    refs: &Transcripts,
    bias: &BiasList,
    counts: &WordCounts,
    stopwords: &Stopwords,
    options: &ScoreOptions,
) -> Result<RecallReport> {
    if let Some(id) = refs.keys().find(|id| !hyps.contains_key(*id)) {
        return Err(Error::MissingUtterance { id: id.clone() });
    }
    if let Some(id) = hyps.keys().find(|id| !refs.contains_key(*id)) {
        return Err(Error::MissingUtterance { id: id.clone() });
    }

    let bias_words: HashSet<&str> = crate::bias::bias_words(bias, stopwords).into_iter().collect();
    let phrases: Vec<&[String]> = bias
        .terms()
        .iter()
        .filter(|t| t.is_phrase())
        .map(|t| t.words.as_slice())
        .collect();

    let mut word = CategoryStats::default();
    let mut phrase = CategoryStats::default();
    let mut rare = CategoryStats::default();
    let mut oov = CategoryStats::default();
    let mut per_term: BTreeMap<(TermKind, String), CategoryStats> = BTreeMap::new();
    let (mut errors, mut ref_words) = (0u64, 0u64);

    for (id, reference) in refs {
        let r = words(reference);
        let h = words(&hyps[id]);
        let a = align(&h, &r);
        errors += a.errors() as u64;
        ref_words += r.len() as u64;
        let hit = hits(&a);
        let ref_ops = a.ref_ops();

        for (i, w) in r.iter().enumerate() {
            if !bias_words.contains(w.as_str()) {
                continue;
            }
            let count = counts.get(w);
            word.record(hit[i]);
            if count < options.rare_threshold {
                rare.record(hit[i]);
            }
            if count == 0 {
                oov.record(hit[i]);
            }
            per_term
                .entry((TermKind::Word, w.clone()))
                .or_default()
                .record(hit[i]);
        }

        for p in &phrases {
            let k = p.len();
            if k > r.len() {
                continue;
            }
            for start in 0..=r.len() - k {
                if r[start..start + k] != **p {
                    continue;
                }
                let all_hit = hit[start..start + k].iter().all(|&x| x);
                let contiguous = ref_ops[start + k - 1] - ref_ops[start] == k - 1;
                let ok = all_hit && contiguous;
                phrase.record(ok);
                per_term
                    .entry((TermKind::Phrase, p.join(" ")))
                    .or_default()
                    .record(ok);
            }
        }
    }

    let terms = per_term
        .into_iter()
        .map(|((kind, term), s)| TermReport {
            training_count: (kind == TermKind::Word).then(|| counts.get(&term)),
            term,
            kind,
            occurrences: s.occurrences,
            hits: s.hits,
        })
        .collect();

    Ok(RecallReport {
        schema: REPORT_SCHEMA.into(),
        version: REPORT_VERSION,
        utterances: refs.len(),
        ref_words,
        errors,
        wer: errors as f64 / ref_words.max(1) as f64,
        rare_threshold: options.rare_threshold,
        categories: Categories {
            word: word.into(),
            phrase: phrase.into(),
            rare: rare.into(),
            oov: oov.into(),
        },
        terms,
    })
}
