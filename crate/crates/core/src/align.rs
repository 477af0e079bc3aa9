//! Word alignment, WER, and mining of substitution error pairs.

use std::fmt::Write as _;
use std::path::Path;

use crate::error::{Error, Result};
use crate::text::{words, Stopwords};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum EditKind {
    Match,
    Substitute,
    Insert,
    Delete,
}

/// One alignment column. `ref_word`/`hyp_word` index into the aligned sequences.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct EditOp {
    pub kind: EditKind,
    pub ref_word: Option<usize>,
    pub hyp_word: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Alignment {
    pub reference: Vec<String>,
    pub hypothesis: Vec<String>,
    pub ops: Vec<EditOp>,
}

impl Alignment {
    /// Substitutions + insertions + deletions.
    pub fn errors(&self) -> usize {
        self.ops.iter().filter(|o| o.kind != EditKind::Match).count()
    }

    pub fn count(&self, kind: EditKind) -> usize {
        self.ops.iter().filter(|o| o.kind == kind).count()
    }

    /// For each reference position, the op index aligned to it.
    pub fn ref_ops(&self) -> Vec<usize> {
        let mut out = vec![0; self.reference.len()];
        for (i, op) in self.ops.iter().enumerate() {
            if let Some(r) = op.ref_word {
                out[r] = i;
            }
        }
        out
    }
}

/// Minimal unit-cost edit path turning `reference` into `hyp`.
///
/// Among minimal paths the backtrace prefers a diagonal step (match or
/// substitution) over deletion over insertion, so a substitution is never
/// split into an insert/delete pair.
pub fn edit_path<T: PartialEq>(hyp: &[T], reference: &[T]) -> Vec<EditOp> {
    let (n, m) = (reference.len(), hyp.len());
    let width = m + 1;
    let mut cost = vec![0u32; (n + 1) * width];
    for i in 0..=n {
        cost[i * width] = i as u32;
    }
    for (j, c) in cost.iter_mut().take(width).enumerate() {
        *c = j as u32;
    }
    for i in 1..=n {
        for j in 1..=m {
            let diag = cost[(i - 1) * width + j - 1] + u32::from(reference[i - 1] != hyp[j - 1]);
            let del = cost[(i - 1) * width + j] + 1;
            let ins = cost[i * width + j - 1] + 1;
            cost[i * width + j] = diag.min(del).min(ins);
        }
    }
    let mut ops = Vec::with_capacity(n.max(m));
    let (mut i, mut j) = (n, m);
    while i > 0 || j > 0 {
        let here = cost[i * width + j];
        if i > 0 && j > 0 {
            let same = reference[i - 1] == hyp[j - 1];
            if cost[(i - 1) * width + j - 1] + u32::from(!same) == here {
                ops.push(EditOp {
                    kind: if same { EditKind::Match } else { EditKind::Substitute },
                    ref_word: Some(i - 1),
                    hyp_word: Some(j - 1),
                });
                i -= 1;
                j -= 1;
                continue;
            }
        }
        if i > 0 && cost[(i - 1) * width + j] + 1 == here {
            ops.push(EditOp {
                kind: EditKind::Delete,
                ref_word: Some(i - 1),
                hyp_word: None,
            });
            i -= 1;
        } else {
            ops.push(EditOp {
                kind: EditKind::Insert,
                ref_word: None,
                hyp_word: Some(j - 1),
            });
            j -= 1;
        }
    }
    ops.reverse();
    ops
}

/// Word-level alignment of a hypothesis against its reference.
pub fn align<S: AsRef<str>>(hyp: &[S], reference: &[S]) -> Alignment {
    let h: Vec<&str> = hyp.iter().map(AsRef::as_ref).collect();
    let r: Vec<&str> = reference.iter().map(AsRef::as_ref).collect();
    let ops = edit_path(&h, &r);
    Alignment {
        reference: r.into_iter().map(str::to_owned).collect(),
        hypothesis: h.into_iter().map(str::to_owned).collect(),
        ops,
    }
}

/// Aligns two normalized texts.
pub fn align_text(hyp: &str, reference: &str) -> Alignment {
    align(&words(hyp), &words(reference))
}

/// Corpus word error rate: total edits over total reference words. With no
/// reference words the raw edit count is returned.
pub fn wer<'a>(alignments: impl IntoIterator<Item = &'a Alignment>) -> f64 {
    let (mut errors, mut words) = (0usize, 0usize);
    for a in alignments {
        errors += a.errors();
        words += a.reference.len();
    }
    errors as f64 / words.max(1) as f64
}

/// A (reference segment, recognized segment) training pair.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ErrorPair {
    pub source: String,
    pub target: String,
}

pub const DEFAULT_MAX_RUN: usize = 3;

/// Collects maximal runs of consecutive substitutions, splits runs longer than
/// `max_run`, and drops pairs whose source words are all stopwords.
pub fn mine_pairs<'a>(
    alignments: impl IntoIterator<Item = &'a Alignment>,
    stopwords: &Stopwords,
    max_run: usize,
) -> Vec<ErrorPair> {
    let max_run = max_run.max(1);
    let mut out = Vec::new();
    for a in alignments {
        let mut run: Vec<(usize, usize)> = Vec::new();
        let mut flush = |run: &mut Vec<(usize, usize)>| {
            for chunk in run.chunks(max_run) {
                let src: Vec<&str> = chunk.iter().map(|&(r, _)| a.reference[r].as_str()).collect();
                if src.iter().all(|w| stopwords.contains(w)) {
                    continue;
                }
                let tgt: Vec<&str> = chunk.iter().map(|&(_, h)| a.hypothesis[h].as_str()).collect();
                out.push(ErrorPair {
                    source: src.join(" "),
                    target: tgt.join(" "),
                });
            }
            run.clear();
        };
        for op in &a.ops {
            match (op.kind, op.ref_word, op.hyp_word) {
                (EditKind::Substitute, Some(r), Some(h)) => run.push((r, h)),
                _ => flush(&mut run),
            }
        }
        flush(&mut run);
    }
    out
}

pub fn pairs_to_text(pairs: &[ErrorPair]) -> String {
    let mut out = String::new();
    for p in pairs {
        let _ = writeln!(out, "{}\t{}", p.source, p.target);
    }
    out
}

/// Reads `SOURCE<TAB>TARGET` lines.
pub fn load_pairs(path: &Path) -> Result<Vec<ErrorPair>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let (s, t) = line
            .split_once('\t')
            .ok_or_else(|| Error::parse(path, i + 1, "expected SOURCE<TAB>TARGET"))?;
        out.push(ErrorPair {
            source: crate::text::normalize(s),
            target: crate::text::normalize(t),
        });
    }
    Ok(out)
}
