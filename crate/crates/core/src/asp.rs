//! Alternate spelling prediction.
//!
//! A character-level noisy channel learned from mined error pairs stands in
//! for a sequence-to-sequence model: each source character is copied,
//! substituted or deleted, and characters may be inserted before any source
//! position or at the end. Operation probabilities depend only on the source
//! character being read (or on the end of the string) and are estimated from
//! minimal edit alignments with add-k smoothing.
//!
//! Generation runs a beam search over edit sequences and returns an n-best
//! list of alternate spellings; [`filter`] then applies the likelihood-gap
//! and common-word rules.

use std::collections::{BTreeMap, BTreeSet, HashMap, HashSet};
use std::fmt::Write as _;
use std::path::Path;

use crate::align::{edit_path, EditKind, ErrorPair};
use crate::error::{Error, Result};
use crate::io::{BiasList, WordCounts};

pub const DEFAULT_SMOOTHING: f64 = 0.1;
pub const DEFAULT_NBEST: usize = 5;
pub const DEFAULT_GAP: f64 = 1.0;
pub const DEFAULT_COMMON_CUTOFF: u64 = 1000;

const FORMAT_HEADER: &str = "ctxbias-channel-model";
pub const FORMAT_VERSION: u32 = 1;

/// What the channel is reading: a source character or the end of the string.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Context {
    Char(char),
    End,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum EditOperation {
    Copy,
    Substitute(char),
    Delete,
    Insert(char),
    End,
}

impl EditOperation {
    fn consumes(self) -> bool {
        matches!(self, EditOperation::Copy | EditOperation::Substitute(_) | EditOperation::Delete)
    }
}

/// Context-independent character edit model.
#[derive(Debug, Clone, PartialEq)]
pub struct ChannelModel {
    smoothing: f64,
    inventory: Vec<char>,
    /// Log-probabilities per context, ops in sorted order.
    table: BTreeMap<Context, Vec<(EditOperation, f64)>>,
    /// How often each context was observed in training sources.
    observations: BTreeMap<Context, u64>,
}

fn allowed_ops(ctx: Context, inventory: &[char]) -> Vec<EditOperation> {
    let mut ops = Vec::with_capacity(2 * inventory.len() + 2);
    match ctx {
        Context::Char(c) => {
            ops.push(EditOperation::Copy);
            ops.push(EditOperation::Delete);
            ops.extend(inventory.iter().filter(|&&x| x != c).map(|&x| EditOperation::Substitute(x)));
        }
        Context::End => ops.push(EditOperation::End),
    }
    ops.extend(inventory.iter().map(|&x| EditOperation::Insert(x)));
    ops.sort();
    ops
}

/// Turns an error pair into `(context, op)` events via a minimal character
/// alignment.
fn pair_events(source: &[char], target: &[char]) -> Vec<(Context, EditOperation)> {
    let ops = edit_path(target, source);
    let mut events = Vec::with_capacity(ops.len() + 1);
    let ctx_at = |i: usize| source.get(i).map_or(Context::End, |&c| Context::Char(c));
    let mut pos = 0;
    for op in ops {
        let event = match op.kind {
            EditKind::Match => EditOperation::Copy,
            EditKind::Substitute => EditOperation::Substitute(target[op.hyp_word.unwrap()]),
            EditKind::Delete => EditOperation::Delete,
            EditKind::Insert => EditOperation::Insert(target[op.hyp_word.unwrap()]),
        };
        events.push((ctx_at(pos), event));
        if event.consumes() {
            pos += 1;
        }
    }
    events.push((Context::End, EditOperation::End));
    events
}

/// Estimates the channel from error pairs with add-`smoothing` smoothing.
pub fn train_channel(pairs: &[ErrorPair], smoothing: f64) -> Result<ChannelModel> {
    if pairs.is_empty() {
        return Err(Error::EmptyCorpus);
    }
    if !(smoothing > 0.0 && smoothing.is_finite()) {
        return Err(Error::Config(format!("smoothing must be positive, got {smoothing}")));
    }
    let mut inventory = BTreeSet::new();
    let mut counts: HashMap<(Context, EditOperation), u64> = HashMap::new();
    let mut observations: BTreeMap<Context, u64> = BTreeMap::new();
    for pair in pairs {
        let src: Vec<char> = pair.source.chars().collect();
        let tgt: Vec<char> = pair.target.chars().collect();
        inventory.extend(src.iter().copied());
        inventory.extend(tgt.iter().copied());
        for &c in &src {
            *observations.entry(Context::Char(c)).or_default() += 1;
        }
        *observations.entry(Context::End).or_default() += 1;
        for event in pair_events(&src, &tgt) {
            *counts.entry(event).or_default() += 1;
        }
    }
    let inventory: Vec<char> = inventory.into_iter().collect();
    let mut table = BTreeMap::new();
    for &ctx in observations.keys() {
        let ops = allowed_ops(ctx, &inventory);
        let total: u64 = ops.iter().map(|&op| counts.get(&(ctx, op)).copied().unwrap_or(0)).sum();
        let denom = total as f64 + smoothing * ops.len() as f64;
        let row = ops
            .into_iter()
            .map(|op| {
                let c = counts.get(&(ctx, op)).copied().unwrap_or(0) as f64;
                (op, ((c + smoothing) / denom).ln())
            })
            .collect();
        table.insert(ctx, row);
    }
    Ok(ChannelModel {
        smoothing,
        inventory,
        table,
        observations,
    })
}

const COPY_ONLY: &[(EditOperation, f64)] = &[(EditOperation::Copy, 0.0)];
const END_ONLY: &[(EditOperation, f64)] = &[(EditOperation::End, 0.0)];

fn encode_char(c: char) -> String {
    format!("U+{:04X}", c as u32)
}

fn decode_char(s: &str) -> Option<char> {
    let hex = s.strip_prefix("U+")?;
    char::from_u32(u32::from_str_radix(hex, 16).ok()?)
}

impl ChannelModel {
    pub fn smoothing(&self) -> f64 {
        self.smoothing
    }

    pub fn inventory(&self) -> &[char] {
        &self.inventory
    }

    /// Operation log-probabilities in a context. Characters never seen in a
    /// training source can only be copied.
    pub fn ops(&self, ctx: Context) -> &[(EditOperation, f64)] {
        match self.table.get(&ctx) {
            Some(row) => row,
            None if ctx == Context::End => END_ONLY,
            None => COPY_ONLY,
        }
    }

    pub fn logprob(&self, ctx: Context, op: EditOperation) -> Option<f64> {
        self.ops(ctx).iter().find(|(o, _)| *o == op).map(|&(_, p)| p)
    }

    /// Characters seen at least 10 times whose most likely operation is not a copy.
    pub fn copy_violations(&self) -> Vec<char> {
        self.observations
            .iter()
            .filter_map(|(&ctx, &n)| match ctx {
                Context::Char(c) if n >= 10 => Some((c, ctx)),
                _ => None,
            })
            .filter(|&(_, ctx)| {
                let row = self.ops(ctx);
                let copy = self.logprob(ctx, EditOperation::Copy).unwrap_or(f64::NEG_INFINITY);
                row.iter().any(|&(op, p)| op != EditOperation::Copy && p >= copy)
            })
            .map(|(c, _)| c)
            .collect()
    }

    /// Log-probability of one specific edit sequence applied to `source`,
    /// or `None` if the sequence does not consume it exactly.
    pub fn sequence_logprob(&self, source: &str, ops: &[EditOperation]) -> Option<f64> {
        let src: Vec<char> = source.chars().collect();
        let mut pos = 0;
        let mut total = 0.0;
        for &op in ops {
            let ctx = src.get(pos).map_or(Context::End, |&c| Context::Char(c));
            total += self.logprob(ctx, op)?;
            if op.consumes() {
                pos += 1;
            }
            if op == EditOperation::End {
                return (pos == src.len()).then_some(total);
            }
        }
        None
    }

    pub fn to_text(&self) -> String {
        let mut out = format!("{FORMAT_HEADER} {FORMAT_VERSION}\n");
        let _ = writeln!(out, "smoothing {:?}", self.smoothing);
        let inv: Vec<String> = self.inventory.iter().map(|&c| encode_char(c)).collect();
        let _ = writeln!(out, "inventory {}", inv.join(" "));
        for (&ctx, &n) in &self.observations {
            let _ = writeln!(out, "seen {} {n}", ctx_name(ctx));
        }
        for (&ctx, row) in &self.table {
            for &(op, p) in row {
                let (kind, arg) = match op {
                    EditOperation::Copy => ("copy", "-".to_string()),
                    EditOperation::Delete => ("del", "-".to_string()),
                    EditOperation::End => ("end", "-".to_string()),
                    EditOperation::Substitute(c) => ("sub", encode_char(c)),
                    EditOperation::Insert(c) => ("ins", encode_char(c)),
                };
                let _ = writeln!(out, "op {} {kind} {arg} {p:?}", ctx_name(ctx));
            }
        }
        out
    }

    pub fn parse(text: &str, path: &Path) -> Result<Self> {
        let bad = |line: usize, msg: &str| Error::parse(path, line, msg.to_string());
        let mut lines = text.lines().enumerate();
        match lines.next() {
            Some((_, l)) if l == format!("{FORMAT_HEADER} {FORMAT_VERSION}") => {}
            _ => return Err(bad(1, "not a version 1 channel model")),
        }
        let mut model = ChannelModel {
            smoothing: DEFAULT_SMOOTHING,
            inventory: Vec::new(),
            table: BTreeMap::new(),
            observations: BTreeMap::new(),
        };
        for (i, line) in lines {
            let n = i + 1;
            let fields: Vec<&str> = line.split_whitespace().collect();
            match fields.as_slice() {
                [] => {}
                ["smoothing", v] => model.smoothing = v.parse().map_err(|_| bad(n, "bad smoothing"))?,
                ["inventory", chars @ ..] => {
                    model.inventory = chars
                        .iter()
                        .map(|c| decode_char(c).ok_or_else(|| bad(n, "bad character")))
                        .collect::<Result<_>>()?;
                }
                ["seen", ctx, count] => {
                    let ctx = parse_ctx(ctx).ok_or_else(|| bad(n, "bad context"))?;
                    let count = count.parse().map_err(|_| bad(n, "bad count"))?;
                    model.observations.insert(ctx, count);
                }
                ["op", ctx, kind, arg, p] => {
                    let ctx = parse_ctx(ctx).ok_or_else(|| bad(n, "bad context"))?;
                    let ch = || decode_char(arg).ok_or_else(|| bad(n, "bad character"));
                    let op = match *kind {
                        "copy" => EditOperation::Copy,
                        "del" => EditOperation::Delete,
                        "end" => EditOperation::End,
                        "sub" => EditOperation::Substitute(ch()?),
                        "ins" => EditOperation::Insert(ch()?),
                        _ => return Err(bad(n, "unknown operation")),
                    };
                    let p: f64 = p.parse().map_err(|_| bad(n, "bad log-probability"))?;
                    model.table.entry(ctx).or_default().push((op, p));
                }
                _ => return Err(bad(n, "unrecognized line")),
            }
        }
        for row in model.table.values_mut() {
            row.sort_by_key(|a| a.0);
        }
        Ok(model)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text, path)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_text()).map_err(|e| Error::io(path, e))
    }
}

fn ctx_name(ctx: Context) -> String {
    match ctx {
        Context::Char(c) => encode_char(c),
        Context::End => "END".into(),
    }
}

fn parse_ctx(s: &str) -> Option<Context> {
    if s == "END" {
        Some(Context::End)
    } else {
        decode_char(s).map(Context::Char)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Alternate {
    pub text: String,
    /// Channel log-likelihood divided by the term's character count.
    pub log_likelihood: f64,
}

/// Ranked alternates for one term.
#[derive(Debug, Clone, PartialEq)]
pub struct AlternateSet {
    pub term: String,
    pub alternates: Vec<Alternate>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GenerateOptions {
    pub nbest: usize,
    pub beam: usize,
    /// Insertions allowed before each source position (and at the end).
    pub max_insertions: usize,
}

impl Default for GenerateOptions {
    fn default() -> Self {
        GenerateOptions {
            nbest: DEFAULT_NBEST,
            beam: 32,
            max_insertions: 1,
        }
    }
}

/// Whether `text` can stand as a spelling: non-empty words separated by single spaces.
pub fn is_valid_spelling(text: &str) -> bool {
    !text.is_empty() && !text.starts_with(' ') && !text.ends_with(' ') && !text.contains("  ")
}

fn keep_best(hyps: Vec<(String, f64)>, beam: usize) -> Vec<(String, f64)> {
    let mut merged: HashMap<String, f64> = HashMap::with_capacity(hyps.len());
    for (s, p) in hyps {
        merged
            .entry(s)
            .and_modify(|q| *q = q.max(p))
            .or_insert(p);
    }
    let mut out: Vec<(String, f64)> = merged.into_iter().collect();
    out.sort_by(|a, b| b.1.total_cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
    out.truncate(beam);
    out
}

/// Beam search over edit sequences; returns the `nbest` most likely spellings
/// other than `term` itself.
pub fn generate(term: &str, model: &ChannelModel, options: &GenerateOptions) -> AlternateSet {
    let src: Vec<char> = term.chars().collect();
    let beam = options.beam.max(1);
    let mut layer: Vec<(String, f64)> = vec![(String::new(), 0.0)];
    let mut finished: Vec<(String, f64)> = Vec::new();

    for i in 0..=src.len() {
        let ctx = src.get(i).map_or(Context::End, |&c| Context::Char(c));
        let ops = model.ops(ctx);
        let mut levels = vec![layer];
        for _ in 0..options.max_insertions {
            let inserted: Vec<(String, f64)> = levels
                .last()
                .unwrap()
                .iter()
                .flat_map(|(s, p)| {
                    ops.iter().filter_map(move |&(op, q)| match op {
                        EditOperation::Insert(c) => {
                            let mut t = s.clone();
                            t.push(c);
                            Some((t, p + q))
                        }
                        _ => None,
                    })
                })
                .collect();
            if inserted.is_empty() {
                break;
            }
            levels.push(keep_best(inserted, beam));
        }
        let mut next = Vec::new();
        for (s, p) in levels.iter().flatten() {
            for &(op, q) in ops {
                match op {
                    EditOperation::Copy => next.push((format!("{s}{}", src[i]), p + q)),
                    EditOperation::Substitute(c) => next.push((format!("{s}{c}"), p + q)),
                    EditOperation::Delete => next.push((s.clone(), p + q)),
                    EditOperation::End => finished.push((s.clone(), p + q)),
                    EditOperation::Insert(_) => {}
                }
            }
        }
        layer = keep_best(next, beam);
    }

    let norm = src.len().max(1) as f64;
    let mut ranked = keep_best(finished, usize::MAX);
    ranked.retain(|(s, _)| s != term && is_valid_spelling(s));
    ranked.truncate(options.nbest);
    AlternateSet {
        term: term.to_owned(),
        alternates: ranked
            .into_iter()
            .map(|(text, p)| Alternate {
                text,
                log_likelihood: p / norm,
            })
            .collect(),
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FilterOptions {
    /// Largest allowed log-likelihood drop between consecutive alternates.
    pub gap_threshold: f64,
    /// Words seen more often than this are common.
    pub common_cutoff: u64,
}

impl Default for FilterOptions {
    fn default() -> Self {
        FilterOptions {
            gap_threshold: DEFAULT_GAP,
            common_cutoff: DEFAULT_COMMON_CUTOFF,
        }
    }
}

/// True when every word of `text` occurs more than `cutoff` times.
pub fn is_common(text: &str, counts: &WordCounts, cutoff: u64) -> bool {
    text.split(' ').all(|w| counts.get(w) > cutoff)
}

/// Applies the likelihood-gap stop rule and drops common words and spellings
/// that collide with the bias list.
///
/// Scanning in rank order, the scan stops for good at the first drop larger
/// than the threshold, measured both between consecutive candidates and from
/// the last kept alternate. Dropped candidates do not end the scan.
pub fn filter(
    alts: &AlternateSet,
    options: &FilterOptions,
    counts: &WordCounts,
    bias: &BiasList,
) -> AlternateSet {
    let taken: HashSet<String> = bias
        .terms()
        .iter()
        .flat_map(|t| t.words.iter().cloned().chain(std::iter::once(t.text())))
        .collect();
    let mut kept: Vec<Alternate> = Vec::new();
    for (i, alt) in alts.alternates.iter().enumerate() {
        if i > 0 && alts.alternates[i - 1].log_likelihood - alt.log_likelihood > options.gap_threshold {
            break;
        }
        if is_common(&alt.text, counts, options.common_cutoff) || taken.contains(&alt.text) {
            continue;
        }
        if let Some(last) = kept.last() {
            if last.log_likelihood - alt.log_likelihood > options.gap_threshold {
                break;
            }
        }
        kept.push(alt.clone());
    }
    AlternateSet {
        term: alts.term.clone(),
        alternates: kept,
    }
}
