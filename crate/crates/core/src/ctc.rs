//! Greedy CTC decoding and CTC prefix beam search with on-the-fly bias
//! rescoring.
//!
//! Every hypothesis carries a cursor into the [`BiasAutomaton`]. When a prefix
//! is extended with a token the automaton's delta is added to the hypothesis
//! bias score immediately, so the bonus takes part in the pruning of that same
//! frame. Partial matches that never complete are given back at finalization.

use std::cmp::Ordering;
use std::collections::HashMap;

use crate::bias::{BiasAutomaton, MatchState};
use crate::io::{PosteriorMatrix, SubwordVocab, TokenId, BLANK};
use crate::logmath::{log_add, LOG_ZERO};

pub const DEFAULT_BEAM_SIZE: usize = 10;

/// Per-frame argmax, repeats collapsed, blanks dropped.
pub fn greedy_decode(post: &PosteriorMatrix) -> Vec<TokenId> {
    let mut out = Vec::new();
    let mut prev = BLANK;
    for t in 0..post.frames() {
        let row = post.frame(t);
        let mut best = 0;
        for (i, &v) in row.iter().enumerate() {
            if v > row[best] {
                best = i;
            }
        }
        let best = best as TokenId;
        if best != BLANK && best != prev {
            out.push(best);
        }
        prev = best;
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BeamSearchOptions {
    pub beam_size: usize,
    pub nbest: usize,
    /// Tokens whose log-probability is this far below the frame's best are
    /// not expanded. `None` expands every token.
    pub token_prune: Option<f64>,
}

impl Default for BeamSearchOptions {
    fn default() -> Self {
        BeamSearchOptions {
            beam_size: DEFAULT_BEAM_SIZE,
            nbest: 1,
            token_prune: Some(50.0),
        }
    }
}

impl BeamSearchOptions {
    pub fn new(beam_size: usize, nbest: usize) -> Self {
        BeamSearchOptions {
            beam_size,
            nbest,
            ..Default::default()
        }
    }
}

/// One finished hypothesis.
#[derive(Debug, Clone, PartialEq)]
pub struct NBestEntry {
    pub tokens: Vec<TokenId>,
    /// Output text after alternate spellings were replaced by their terms.
    pub text: String,
    /// `acoustic + bias`.
    pub score: f64,
    /// CTC log-probability of the prefix, summed over alignments.
    pub acoustic: f64,
    /// Bias bonus earned by completed terms.
    pub bias: f64,
}

/// Finished hypotheses, best first.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct NBestList(pub Vec<NBestEntry>);

impl NBestList {
    pub fn best(&self) -> Option<&NBestEntry> {
        self.0.first()
    }

    pub fn iter(&self) -> std::slice::Iter<'_, NBestEntry> {
        self.0.iter()
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

#[derive(Debug, Clone)]
struct PrefixNode {
    parent: u32,
    token: TokenId,
    len: u32,
    bias_state: MatchState,
    bias_score: f64,
    /// Alternate payload completed by this node's token, with its path length.
    alternate: Option<(usize, u32)>,
}

/// Arena of prefixes; a prefix is identified by the id of its last node.
struct PrefixTree {
    nodes: Vec<PrefixNode>,
    children: HashMap<(u32, TokenId), u32>,
}

impl PrefixTree {
    fn new() -> Self {
        PrefixTree {
            nodes: vec![PrefixNode {
                parent: 0,
                token: BLANK,
                len: 0,
                bias_state: MatchState::root(),
                bias_score: 0.0,
                alternate: None,
            }],
            children: HashMap::new(),
        }
    }

    fn extend(&mut self, parent: u32, token: TokenId, automaton: Option<&BiasAutomaton>) -> u32 {
        if let Some(&id) = self.children.get(&(parent, token)) {
            return id;
        }
        let p = &self.nodes[parent as usize];
        let (bias_state, bias_score, alternate) = match automaton {
            Some(aut) => {
                let step = aut.step(p.bias_state, token);
                let alternate = step
                    .completed
                    .filter(|c| aut.payload(c.payload).is_alternate)
                    .map(|c| (c.payload, c.length));
                (step.next, p.bias_score + step.delta, alternate)
            }
            None => (MatchState::root(), 0.0, None),
        };
        let node = PrefixNode {
            parent,
            token,
            len: p.len + 1,
            bias_state,
            bias_score,
            alternate,
        };
        let id = self.nodes.len() as u32;
        self.nodes.push(node);
        self.children.insert((parent, token), id);
        id
    }

    fn tokens(&self, mut id: u32) -> Vec<TokenId> {
        let mut out = Vec::with_capacity(self.nodes[id as usize].len as usize);
        while id != 0 {
            let n = &self.nodes[id as usize];
            out.push(n.token);
            id = n.parent;
        }
        out.reverse();
        out
    }

    /// Alternate completions on the path as `(start, end, payload)` token spans.
    fn alternate_spans(&self, mut id: u32) -> Vec<(usize, usize, usize)> {
        let mut out = Vec::new();
        while id != 0 {
            let n = &self.nodes[id as usize];
            if let Some((payload, length)) = n.alternate {
                let end = n.len as usize;
                out.push((end - length as usize, end, payload));
            }
            id = n.parent;
        }
        out.reverse();
        out
    }
}

#[derive(Debug, Clone, Copy)]
struct Beam {
    prefix: u32,
    blank: f64,
    nonblank: f64,
}

impl Beam {
    fn total(&self) -> f64 {
        log_add(self.blank, self.nonblank)
    }
}

/// Orders by score descending, then shorter prefix, then token ids.
fn rank(tree: &PrefixTree, a: (f64, u32), b: (f64, u32)) -> Ordering {
    b.0.partial_cmp(&a.0)
        .unwrap_or(Ordering::Equal)
        .then_with(|| tree.nodes[a.1 as usize].len.cmp(&tree.nodes[b.1 as usize].len))
        .then_with(|| {
            if a.1 == b.1 {
                Ordering::Equal
            } else {
                tree.tokens(a.1).cmp(&tree.tokens(b.1))
            }
        })
}

/// CTC prefix beam search. With `automaton`, bias deltas are applied when a
/// prefix is extended, before the frame's top-`beam_size` pruning.
pub fn prefix_beam_search(
    post: &PosteriorMatrix,
    vocab: &SubwordVocab,
    options: &BeamSearchOptions,
    automaton: Option<&BiasAutomaton>,
) -> NBestList {
    let beam_size = options.beam_size.max(1);
    let mut tree = PrefixTree::new();
    let mut beams = vec![Beam {
        prefix: 0,
        blank: 0.0,
        nonblank: LOG_ZERO,
    }];
    let vsize = post.vocab_size().min(vocab.len()) as TokenId;
    let mut index: HashMap<u32, usize> = HashMap::new();
    let mut next: Vec<Beam> = Vec::new();
    let mut active: Vec<TokenId> = Vec::with_capacity(vsize as usize);

    for t in 0..post.frames() {
        index.clear();
        next.clear();
        active.clear();
        let frame_max = (0..vsize).map(|c| post.logp(t, c)).fold(LOG_ZERO, f64::max);
        for c in 1..vsize {
            let lp = post.logp(t, c);
            if options.token_prune.is_none_or(|th| lp >= frame_max - th) {
                active.push(c);
            }
        }
        let blank_lp = post.logp(t, BLANK);

        let mut add = |prefix: u32, blank: f64, nonblank: f64, next: &mut Vec<Beam>| {
            let slot = *index.entry(prefix).or_insert_with(|| {
                next.push(Beam {
                    prefix,
                    blank: LOG_ZERO,
                    nonblank: LOG_ZERO,
                });
                next.len() - 1
            });
            let b = &mut next[slot];
            b.blank = log_add(b.blank, blank);
            b.nonblank = log_add(b.nonblank, nonblank);
        };

        for beam in &beams {
            let total = beam.total();
            add(beam.prefix, total + blank_lp, LOG_ZERO, &mut next);
            let last = (beam.prefix != 0).then(|| tree.nodes[beam.prefix as usize].token);
            for &c in &active {
                let lp = post.logp(t, c);
                let child = tree.extend(beam.prefix, c, automaton);
                if last == Some(c) {
                    add(beam.prefix, LOG_ZERO, beam.nonblank + lp, &mut next);
                    add(child, LOG_ZERO, beam.blank + lp, &mut next);
                } else {
                    add(child, LOG_ZERO, total + lp, &mut next);
                }
            }
        }

        let mut scored: Vec<(f64, u32, usize)> = next
            .iter()
            .enumerate()
            .map(|(i, b)| (b.total() + tree.nodes[b.prefix as usize].bias_score, b.prefix, i))
            .collect();
        scored.sort_by(|a, b| rank(&tree, (a.0, a.1), (b.0, b.1)));
        scored.truncate(beam_size);
        beams = scored.iter().map(|&(_, _, i)| next[i]).collect();
    }

    let mut finished: Vec<(f64, u32, f64, f64)> = beams
        .iter()
        .map(|b| {
            let node = &tree.nodes[b.prefix as usize];
            let bias = node.bias_score + automaton.map_or(0.0, |a| a.finish(node.bias_state));
            let acoustic = b.total();
            (acoustic + bias, b.prefix, acoustic, bias)
        })
        .collect();
    finished.sort_by(|a, b| rank(&tree, (a.0, a.1), (b.0, b.1)));
    finished.truncate(options.nbest.max(1));

    NBestList(
        finished
            .into_iter()
            .map(|(score, prefix, acoustic, bias)| {
                let tokens = tree.tokens(prefix);
                let spans = tree.alternate_spans(prefix);
                let text = match automaton {
                    Some(aut) if !spans.is_empty() => render_with_replacements(vocab, &tokens, &spans, aut),
                    _ => vocab.detokenize(&tokens),
                };
                NBestEntry {
                    tokens,
                    text,
                    score,
                    acoustic,
                    bias,
                }
            })
            .collect(),
    )
}

/// Detokenizes, substituting original terms for alternate spans that cover
/// whole words. Overlaps resolve left to right, longest span first.
fn render_with_replacements(
    vocab: &SubwordVocab,
    tokens: &[TokenId],
    spans: &[(usize, usize, usize)],
    aut: &BiasAutomaton,
) -> String {
    let marked = vocab.is_word_marked();
    let at_boundary = |i: usize| !marked || i == tokens.len() || vocab.starts_word(tokens[i]);
    let mut spans: Vec<_> = spans
        .iter()
        .copied()
        .filter(|&(s, e, _)| at_boundary(s) && at_boundary(e))
        .collect();
    spans.sort_by(|a, b| a.0.cmp(&b.0).then((b.1 - b.0).cmp(&(a.1 - a.0))));

    let mut pieces = Vec::new();
    let mut pos = 0;
    for (start, end, payload) in spans {
        if start < pos {
            continue;
        }
        pieces.push(vocab.detokenize(&tokens[pos..start]));
        pieces.push(aut.payload(payload).original_term.clone());
        pos = end;
    }
    pieces.push(vocab.detokenize(&tokens[pos..]));
    pieces.retain(|p| !p.is_empty());
    pieces.join(" ")
}
