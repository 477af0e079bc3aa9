//! Compiles a bias list (and optional alternate spellings) into the two
//! artifacts the decoders consume: a token-level [`BiasAutomaton`] for on-the-fly
//! rescoring in prefix beam search, and a [`GrammarPatch`] that rewrites the
//! unigram grammar of the lexicon decoder.
//!
//! `beta` means different things on the two sides. For the automaton it is a
//! log-domain bonus added for every matched subword unit. For the grammar patch
//! it is the fixed log-probability given to a whole term, and values above zero
//! are accepted on purpose.

mod automaton;
mod patch;

pub use automaton::{BiasAutomaton, Completion, MatchState, NodeId, Payload, Step, ROOT};
pub use patch::{compile_grammar_patch, GrammarPatch, PatchEntry};

use crate::error::{Error, Result};
use crate::io::{tokenize, tokenize_phrase, Alternates, BiasList, Lexicon, SubwordVocab};
use crate::text::Stopwords;

/// Words of the bias list that get their own path: every word of a
/// single-word term, and the non-stopword words of multi-word terms.
pub fn bias_words<'a>(bias: &'a BiasList, stopwords: &Stopwords) -> Vec<&'a str> {
    let mut seen = std::collections::HashSet::new();
    let mut out = Vec::new();
    for term in bias.terms() {
        for w in &term.words {
            if term.is_phrase() && stopwords.contains(w) {
                continue;
            }
            if seen.insert(w.as_str()) {
                out.push(w.as_str());
            }
        }
    }
    out
}

/// Builds the CTC bias automaton: one path per distinct bias word and one per
/// alternate spelling, the latter reporting the term it replaces.
pub fn compile_automaton(
    bias: &BiasList,
    alternates: &Alternates,
    lexicon: &Lexicon,
    vocab: &SubwordVocab,
    beta: f64,
    stopwords: &Stopwords,
) -> Result<BiasAutomaton> {
    if !beta.is_finite() {
        return Err(Error::Config(format!("bias weight must be finite, got {beta}")));
    }
    let wrap = |term: &str| {
        let term = term.to_owned();
        move |e: Error| Error::BiasTerm {
            term,
            source: Box::new(e),
        }
    };
    let mut aut = BiasAutomaton::new(beta);
    for word in bias_words(bias, stopwords) {
        let tokens = tokenize(word, lexicon, vocab).map_err(wrap(word))?;
        aut.insert(&tokens, Payload::term(word));
    }
    for term in bias.terms() {
        let text = term.text();
        for alt in alternates.get(&text) {
            let words: Vec<&str> = alt.split(' ').collect();
            // The model cannot emit an alternate the vocabulary cannot spell.
            match tokenize_phrase(&words, lexicon, vocab) {
                Ok(tokens) => aut.insert(&tokens, Payload::alternate_of(text.clone())),
                Err(e) => log::warn!("skipping alternate {alt:?} of {text:?}: {e}"),
            }
        }
    }
    Ok(aut)
}
