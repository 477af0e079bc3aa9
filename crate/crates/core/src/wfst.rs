//! Viterbi decoding of CTC posteriors against a lexicon and a unigram grammar.
//!
//! The lexicon is a token trie whose nodes may end words. The CTC topology
//! (blank self-loops, repeated labels collapsing, a blank required between two
//! identical labels) is applied on the fly, and the grammar is composed
//! dynamically: a word's log-probability is added when the search leaves a
//! word-end node back to the root. For a unigram grammar this is the same
//! search space as a static lexicon-grammar-CTC composition.
//!
//! Scores combine as `acoustic_scale * acoustic + lm`.

use std::cmp::Ordering;
use std::collections::{BTreeMap, HashMap};
use std::fmt::Write as _;
use std::path::Path;

use crate::bias::GrammarPatch;
use crate::error::{Error, Result};
use crate::io::{tokenize, Lexicon, PosteriorMatrix, SubwordVocab, TokenId, WordCounts, BLANK};
use crate::logmath::{log_sum_exp, LOG_ZERO};
use crate::text::{split_unit, JOIN_CHAR};

pub const DEFAULT_ACOUSTIC_SCALE: f64 = 8.0;
pub const DEFAULT_BEAM: usize = 200;

/// Word log-probabilities of a unigram language model.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct UnigramGrammar {
    words: BTreeMap<String, f64>,
}

impl UnigramGrammar {
    /// Requires the distribution to be normalized within `1e-4` in log space.
    pub fn new(words: BTreeMap<String, f64>) -> Result<Self> {
        if words.is_empty() {
            return Err(Error::Config("grammar has no words".into()));
        }
        if let Some((w, p)) = words.iter().find(|(_, p)| !p.is_finite() || **p > 1e-9) {
            return Err(Error::Config(format!("word {w:?} has invalid log-probability {p}")));
        }
        let lse = log_sum_exp(words.values().copied());
        if lse.abs() > 1e-4 {
            return Err(Error::Config(format!(
                "grammar log-probabilities sum to {lse:.6}, expected 0"
            )));
        }
        Ok(UnigramGrammar { words })
    }

    /// Maximum-likelihood unigram from training counts; zero-count words are
    /// left out.
    pub fn from_counts(counts: &WordCounts) -> Result<Self> {
        let total: u64 = counts.iter().map(|(_, c)| c).sum();
        if total == 0 {
            return Err(Error::Config("word counts are empty".into()));
        }
        let words = counts
            .iter()
            .filter(|&(_, c)| c > 0)
            .map(|(w, c)| (w.to_owned(), (c as f64 / total as f64).ln()))
            .collect();
        Self::new(words)
    }

    pub fn logprob(&self, word: &str) -> Option<f64> {
        self.words.get(word).copied()
    }

    pub fn contains(&self, word: &str) -> bool {
        self.words.contains_key(word)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, f64)> {
        self.words.iter().map(|(w, &p)| (w.as_str(), p))
    }

    pub fn len(&self) -> usize {
        self.words.len()
    }

    pub fn is_empty(&self) -> bool {
        self.words.is_empty()
    }

    pub fn parse(text: &str, path: &Path) -> Result<Self> {
        let mut words = BTreeMap::new();
        for (i, line) in text.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let (w, p) = line
                .split_once('\t')
                .ok_or_else(|| Error::parse(path, i + 1, "expected WORD<TAB>logprob"))?;
            let p: f64 = p
                .trim()
                .parse()
                .map_err(|_| Error::parse(path, i + 1, format!("bad log-probability {p:?}")))?;
            words.insert(w.trim().to_owned(), p);
        }
        Self::new(words).map_err(|e| match e {
            Error::Config(msg) => Error::parse(path, 0, msg),
            other => other,
        })
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text, path)
    }

    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for (w, p) in &self.words {
            let _ = writeln!(out, "{w}\t{p:?}");
        }
        out
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_text()).map_err(|e| Error::io(path, e))
    }
}

/// A word-end arc: leaving the node through it emits `output` and adds `lm`.
#[derive(Debug, Clone, PartialEq)]
pub struct WordArc {
    pub unit: String,
    pub lm: f64,
    pub output: String,
}

#[derive(Debug, Clone, Default)]
struct GraphNode {
    children: Vec<(TokenId, u32)>,
    words: Vec<u32>,
}

/// Lexicon trie with word-end arcs carrying grammar scores.
#[derive(Debug, Clone)]
pub struct DecodingGraph {
    nodes: Vec<GraphNode>,
    arcs: Vec<WordArc>,
    units: BTreeMap<String, u32>,
}

impl DecodingGraph {
    pub fn is_reachable(&self, unit: &str) -> bool {
        self.units.contains_key(unit)
    }

    pub fn arc(&self, unit: &str) -> Option<&WordArc> {
        self.units.get(unit).map(|&i| &self.arcs[i as usize])
    }

    pub fn units(&self) -> impl Iterator<Item = &str> {
        self.units.keys().map(String::as_str)
    }

    pub fn num_nodes(&self) -> usize {
        self.nodes.len()
    }

    fn child(&self, node: u32, token: TokenId) -> Option<u32> {
        let ch = &self.nodes[node as usize].children;
        ch.binary_search_by_key(&token, |&(t, _)| t).ok().map(|i| ch[i].1)
    }

    fn add_path(&mut self, tokens: &[TokenId], arc: u32) {
        let mut node = 0u32;
        for &tok in tokens {
            node = match self.child(node, tok) {
                Some(c) => c,
                None => {
                    let id = self.nodes.len() as u32;
                    self.nodes.push(GraphNode::default());
                    let ch = &mut self.nodes[node as usize].children;
                    let pos = ch.partition_point(|&(t, _)| t < tok);
                    ch.insert(pos, (tok, id));
                    id
                }
            };
        }
        let words = &mut self.nodes[node as usize].words;
        if !words.contains(&arc) {
            words.push(arc);
        }
    }
}

fn unit_pronunciations(unit: &str, lexicon: &Lexicon, vocab: &SubwordVocab) -> Result<Vec<Vec<TokenId>>> {
    if unit.contains(JOIN_CHAR) {
        let mut tokens = Vec::new();
        for w in split_unit(unit) {
            tokens.extend(tokenize(w, lexicon, vocab)?);
        }
        return Ok(vec![tokens]);
    }
    match lexicon.pronunciations(unit) {
        Some(prons) if !prons.is_empty() => Ok(prons.to_vec()),
        _ => Ok(vec![vocab.segment(unit)?]),
    }
}

/// Builds the decoding graph for `grammar` with `patch` applied on top:
/// patched units get the patch score (replacing any grammar score) and emit
/// the patch replacement text.
pub fn build_graph(
    lexicon: &Lexicon,
    grammar: &UnigramGrammar,
    patch: Option<&GrammarPatch>,
    vocab: &SubwordVocab,
) -> Result<DecodingGraph> {
    let mut entries: BTreeMap<String, (f64, String)> = grammar
        .iter()
        .map(|(w, p)| (w.to_owned(), (p, w.replace(JOIN_CHAR, " "))))
        .collect();
    if let Some(patch) = patch {
        for e in patch.entries() {
            if e.is_alternate && !entries.contains_key(&e.unit) {
                if let Err(err) = unit_pronunciations(&e.unit, lexicon, vocab) {
                    log::warn!("skipping alternate {:?} of {:?}: {err}", e.unit, e.replacement);
                    continue;
                }
            }
            entries.insert(e.unit.clone(), (e.lm_logprob, e.replacement.clone()));
        }
    }
    let mut graph = DecodingGraph {
        nodes: vec![GraphNode::default()],
        arcs: Vec::with_capacity(entries.len()),
        units: BTreeMap::new(),
    };
    for (unit, (lm, output)) in entries {
        let prons = unit_pronunciations(&unit, lexicon, vocab)?;
        let arc = graph.arcs.len() as u32;
        graph.arcs.push(WordArc {
            unit: unit.clone(),
            lm,
            output,
        });
        for pron in &prons {
            graph.add_path(pron, arc);
        }
        graph.units.insert(unit, arc);
    }
    Ok(graph)
}

#[derive(Debug, Clone, PartialEq)]
pub struct WfstResult {
    /// Grammar units on the best path.
    pub units: Vec<String>,
    /// Output text with replacements applied.
    pub text: String,
    pub score: f64,
    pub acoustic: f64,
    pub lm: f64,
}

#[derive(Debug, Clone, Copy)]
struct Token {
    node: u32,
    /// Label currently being held; `None` after a blank.
    last: Option<TokenId>,
    acoustic: f64,
    lm: f64,
    history: u32,
}

const NO_HISTORY: u32 = u32::MAX;

struct History {
    entries: Vec<(u32, u32)>,
}

impl History {
    fn push(&mut self, prev: u32, arc: u32) -> u32 {
        self.entries.push((prev, arc));
        (self.entries.len() - 1) as u32
    }

    fn arcs(&self, mut id: u32) -> Vec<u32> {
        let mut out = Vec::new();
        while id != NO_HISTORY {
            let (prev, arc) = self.entries[id as usize];
            out.push(arc);
            id = prev;
        }
        out.reverse();
        out
    }
}

struct Search<'g> {
    graph: &'g DecodingGraph,
    scale: f64,
    history: History,
}

impl Search<'_> {
    fn total(&self, t: &Token) -> f64 {
        self.scale * t.acoustic + t.lm
    }

    /// Higher total, then higher acoustic, then lexicographically smaller words.
    fn better(&self, a: &Token, b: &Token) -> bool {
        let (ta, tb) = (self.total(a), self.total(b));
        if ta != tb {
            return ta > tb;
        }
        if a.acoustic != b.acoustic {
            return a.acoustic > b.acoustic;
        }
        self.words(a.history) < self.words(b.history)
    }

    fn words(&self, history: u32) -> Vec<&str> {
        self.history
            .arcs(history)
            .into_iter()
            .map(|a| self.graph.arcs[a as usize].unit.as_str())
            .collect()
    }

    fn relax(&self, pool: &mut Vec<Token>, index: &mut HashMap<(u32, Option<TokenId>), usize>, tok: Token) {
        match index.get(&(tok.node, tok.last)) {
            Some(&i) => {
                if self.better(&tok, &pool[i]) {
                    pool[i] = tok;
                }
            }
            None => {
                index.insert((tok.node, tok.last), pool.len());
                pool.push(tok);
            }
        }
    }

    /// Leaves every word-end node back to the root through its word arcs.
    fn close_words(&mut self, pool: &mut Vec<Token>, index: &mut HashMap<(u32, Option<TokenId>), usize>) {
        let n = pool.len();
        for i in 0..n {
            let tok = pool[i];
            for &arc in &self.graph.nodes[tok.node as usize].words {
                let history = self.history.push(tok.history, arc);
                let next = Token {
                    node: 0,
                    last: tok.last,
                    acoustic: tok.acoustic,
                    lm: tok.lm + self.graph.arcs[arc as usize].lm,
                    history,
                };
                self.relax(pool, index, next);
            }
        }
    }

    fn prune(&self, pool: &mut Vec<Token>, beam: usize) {
        if pool.len() <= beam {
            return;
        }
        pool.sort_by(|a, b| {
            if self.better(a, b) {
                Ordering::Less
            } else if self.better(b, a) {
                Ordering::Greater
            } else {
                Ordering::Equal
            }
        });
        pool.truncate(beam);
    }
}

/// Best word sequence under `acoustic_scale * acoustic + lm`, with at most
/// `beam` tokens kept per frame.
pub fn wfst_decode(
    post: &PosteriorMatrix,
    graph: &DecodingGraph,
    acoustic_scale: f64,
    beam: usize,
) -> WfstResult {
    let mut search = Search {
        graph,
        scale: acoustic_scale,
        history: History { entries: Vec::new() },
    };
    let beam = beam.max(1);
    let mut pool = vec![Token {
        node: 0,
        last: None,
        acoustic: 0.0,
        lm: 0.0,
        history: NO_HISTORY,
    }];
    let mut next: Vec<Token> = Vec::new();
    let mut index = HashMap::new();

    for t in 0..post.frames() {
        next.clear();
        index.clear();
        let blank_lp = post.logp(t, BLANK);
        for tok in &pool {
            search.relax(
                &mut next,
                &mut index,
                Token {
                    last: None,
                    acoustic: tok.acoustic + blank_lp,
                    ..*tok
                },
            );
            if let Some(held) = tok.last {
                search.relax(
                    &mut next,
                    &mut index,
                    Token {
                        acoustic: tok.acoustic + post.logp(t, held),
                        ..*tok
                    },
                );
            }
            for &(label, child) in &graph.nodes[tok.node as usize].children {
                if tok.last == Some(label) || label as usize >= post.vocab_size() {
                    continue;
                }
                search.relax(
                    &mut next,
                    &mut index,
                    Token {
                        node: child,
                        last: Some(label),
                        acoustic: tok.acoustic + post.logp(t, label),
                        ..*tok
                    },
                );
            }
        }
        search.close_words(&mut next, &mut index);
        search.prune(&mut next, beam);
        std::mem::swap(&mut pool, &mut next);
    }

    let best = pool
        .iter()
        .filter(|t| t.node == 0)
        .fold(None::<Token>, |acc, t| match acc {
            Some(b) if !search.better(t, &b) => Some(b),
            _ => Some(*t),
        });
    match best {
        Some(tok) => {
            let arcs = search.history.arcs(tok.history);
            let units = arcs.iter().map(|&a| graph.arcs[a as usize].unit.clone()).collect();
            let text = arcs
                .iter()
                .map(|&a| graph.arcs[a as usize].output.as_str())
                .filter(|s| !s.is_empty())
                .collect::<Vec<_>>()
                .join(" ");
            WfstResult {
                units,
                text,
                score: search.total(&tok),
                acoustic: tok.acoustic,
                lm: tok.lm,
            }
        }
        None => WfstResult {
            units: Vec::new(),
            text: String::new(),
            score: LOG_ZERO,
            acoustic: LOG_ZERO,
            lm: 0.0,
        },
    }
}
