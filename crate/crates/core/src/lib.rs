//! Shallow-fusion contextual biasing over precomputed CTC posteriors.
//!
//! The crate covers the decoder side of contextual ASR:
//!
//! * [`ctc`]: greedy decoding and prefix beam search with on-the-fly bias
//!   rescoring through a token-level [`bias::BiasAutomaton`];
//! * [`wfst`]: Viterbi decoding against a lexicon and unigram grammar, with
//!   bias terms patched into the grammar ([`bias::GrammarPatch`]);
//! * [`align`]: word alignment, WER, and error-pair mining;
//! * [`asp`]: a character noisy-channel model that proposes alternate
//!   spellings for bias terms, and the filters applied to them;
//! * [`eval`]: WER and bias-term recall (word, phrase, rare, OOV);
//! * [`fixtures`] and [`pipeline`]: synthetic data and the end-to-end run.
//!
//! See the guide under `book/` for a walk-through.

pub mod align;
pub mod asp;
pub mod bias;
pub mod ctc;
mod error;
pub mod eval;
pub mod fixtures;
pub mod io;
pub mod logmath;
pub mod pipeline;
pub mod text;
pub mod wfst;

pub use error::{Error, Result};

// Compiles and runs the guide's snippets as doc-tests.
#[cfg(doctest)]
mod book {
    #[doc = include_str!("../../../book/src/units.md")]
    mod units {}
    #[doc = include_str!("../../../book/src/ctc-biasing.md")]
    mod ctc_biasing {}
    #[doc = include_str!("../../../book/src/wfst-biasing.md")]
    mod wfst_biasing {}
    #[doc = include_str!("../../../book/src/error-mining.md")]
    mod error_mining {}
    #[doc = include_str!("../../../book/src/alternate-spellings.md")]
    mod alternate_spellings {}
    #[doc = include_str!("../../../book/src/scoring.md")]
    mod scoring {}
    #[doc = include_str!("../../../book/src/pipeline.md")]
    mod pipeline {}
    #[doc = include_str!("../../../book/src/formats.md")]
    mod formats {}
}

/// Version of each on-disk format this build reads and writes.
pub fn format_versions() -> Vec<(&'static str, String)> {
    vec![
        ("posteriors-text", "1".into()),
        ("posteriors-binary", "1 (CTCP)".into()),
        ("vocab", "1".into()),
        ("lexicon", "1".into()),
        ("grammar", "1".into()),
        ("counts", "1".into()),
        ("bias-list", "1".into()),
        ("alternates", "1".into()),
        ("pairs", "1".into()),
        ("channel-model", asp::FORMAT_VERSION.to_string()),
        ("recall-report", eval::REPORT_VERSION.to_string()),
        ("run-config", pipeline::CONFIG_VERSION.to_string()),
        ("fixture-spec", fixtures::SPEC_VERSION.to_string()),
    ]
}
