//! End-to-end run: greedy-decode the training split, mine error pairs, train
//! the spelling channel, predict alternates, decode the test split with
//! biasing, and score it.
//!
//! Every stage writes its output into the run directory. With `resume` a
//! stage whose output already exists loads it instead of recomputing, so an
//! interrupted run can be picked up where it stopped.

use std::collections::BTreeMap;
use std::fmt::{self, Write as _};
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use rayon::prelude::*;

use crate::align::{align_text, load_pairs, mine_pairs, pairs_to_text, ErrorPair, DEFAULT_MAX_RUN};
use crate::asp::{self, ChannelModel, FilterOptions, GenerateOptions};
use crate::bias::{compile_automaton, compile_grammar_patch, BiasAutomaton};
use crate::ctc::{greedy_decode, prefix_beam_search, BeamSearchOptions, DEFAULT_BEAM_SIZE};
use crate::error::{Error, Result};
use crate::eval::{score, RecallReport, ScoreOptions, DEFAULT_RARE_THRESHOLD};
use crate::io::{
    load_posterior_dir, load_transcripts, parse_transcripts, save_transcripts, Alternates, BiasList, Lexicon,
    PosteriorMatrix, SubwordVocab, Transcripts, WordCounts,
};
use crate::text::Stopwords;
use crate::wfst::{
    build_graph, wfst_decode, DecodingGraph, UnigramGrammar, DEFAULT_ACOUSTIC_SCALE, DEFAULT_BEAM,
};

pub const CONFIG_VERSION: u32 = 1;

/// Name of the configuration echo written into every run directory.
pub const CONFIG_ECHO: &str = "config.txt";

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Ctc,
    Wfst,
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Mode::Ctc => "ctc",
            Mode::Wfst => "wfst",
        })
    }
}

impl FromStr for Mode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "ctc" => Ok(Mode::Ctc),
            "wfst" => Ok(Mode::Wfst),
            other => Err(Error::Config(format!("unknown mode {other:?}, expected ctc or wfst"))),
        }
    }
}

/// Settings for one pipeline run, read from a `key = value` file.
///
/// Relative paths in a loaded file are resolved against the file's directory.
/// `beam` defaults per mode; `ac_scale` and `grammar` belong to wfst mode only.
#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub mode: Mode,
    pub beta: f64,
    pub beam: Option<usize>,
    pub nbest: usize,
    pub ac_scale: Option<f64>,
    pub use_alternates: bool,
    pub asp_nbest: usize,
    pub asp_beam: usize,
    pub gap: f64,
    pub common: u64,
    pub smoothing: f64,
    pub max_run: usize,
    pub rare_threshold: u64,
    pub workers: usize,
    /// Seed the fixture set was generated with; informational for runs.
    pub seed: u64,
    pub vocab: PathBuf,
    pub lexicon: PathBuf,
    pub counts: PathBuf,
    pub grammar: Option<PathBuf>,
    pub bias: PathBuf,
    pub stopwords: Option<PathBuf>,
    pub train_posteriors: PathBuf,
    pub train_refs: PathBuf,
    pub test_posteriors: PathBuf,
    pub test_refs: PathBuf,
    pub out: PathBuf,
}

impl Default for RunConfig {
    /// Paths follow the layout written by [`crate::fixtures::FixtureSet::write`].
    fn default() -> Self {
        RunConfig {
            mode: Mode::Ctc,
            beta: 1.0,
            beam: None,
            nbest: 1,
            ac_scale: None,
            use_alternates: true,
            asp_nbest: asp::DEFAULT_NBEST,
            asp_beam: GenerateOptions::default().beam,
            gap: asp::DEFAULT_GAP,
            common: asp::DEFAULT_COMMON_CUTOFF,
            smoothing: asp::DEFAULT_SMOOTHING,
            max_run: DEFAULT_MAX_RUN,
            rare_threshold: DEFAULT_RARE_THRESHOLD,
            workers: 1,
            seed: 0,
            vocab: "vocab.txt".into(),
            lexicon: "lexicon.tsv".into(),
            counts: "counts.tsv".into(),
            grammar: None,
            bias: "bias.txt".into(),
            stopwords: None,
            train_posteriors: "train/posteriors".into(),
            train_refs: "train/ref.tsv".into(),
            test_posteriors: "test/posteriors".into(),
            test_refs: "test/ref.tsv".into(),
            out: "run".into(),
        }
    }
}

fn value<T: FromStr>(key: &str, v: &str) -> Result<T> {
    v.parse()
        .map_err(|_| Error::Config(format!("{key}: cannot parse {v:?}")))
}

impl RunConfig {
    /// Sets one key from its text form.
    pub fn set(&mut self, key: &str, v: &str) -> Result<()> {
        let none_if_empty = |v: &str| (!v.is_empty()).then(|| PathBuf::from(v));
        match key {
            "version" => {
                let version: u32 = value(key, v)?;
                if version != CONFIG_VERSION {
                    return Err(Error::Config(format!("unsupported config version {version}")));
                }
            }
            "mode" => self.mode = v.parse()?,
            "beta" => self.beta = value(key, v)?,
            "beam" => self.beam = Some(value(key, v)?),
            "nbest" => self.nbest = value(key, v)?,
            "ac_scale" => self.ac_scale = Some(value(key, v)?),
            "use_alternates" => self.use_alternates = value(key, v)?,
            "asp_nbest" => self.asp_nbest = value(key, v)?,
            "asp_beam" => self.asp_beam = value(key, v)?,
            "gap" => self.gap = value(key, v)?,
            "common" => self.common = value(key, v)?,
            "smoothing" => self.smoothing = value(key, v)?,
            "max_run" => self.max_run = value(key, v)?,
            "rare_threshold" => self.rare_threshold = value(key, v)?,
            "workers" => self.workers = value(key, v)?,
            "seed" => self.seed = value(key, v)?,
            "vocab" => self.vocab = v.into(),
            "lexicon" => self.lexicon = v.into(),
            "counts" => self.counts = v.into(),
            "grammar" => self.grammar = none_if_empty(v),
            "bias" => self.bias = v.into(),
            "stopwords" => self.stopwords = none_if_empty(v),
            "train_posteriors" => self.train_posteriors = v.into(),
            "train_refs" => self.train_refs = v.into(),
            "test_posteriors" => self.test_posteriors = v.into(),
            "test_refs" => self.test_refs = v.into(),
            "out" => self.out = v.into(),
            other => return Err(Error::Config(format!("unknown key {other:?}"))),
        }
        Ok(())
    }

    /// Parses `key = value` lines; `#` starts a comment. Unset keys keep
    /// their defaults. The result is validated.
    pub fn parse(text: &str, path: &Path) -> Result<Self> {
        let mut config = RunConfig::default();
        let mut seen = std::collections::BTreeSet::new();
        for (i, line) in text.lines().enumerate() {
            let line = line.split('#').next().unwrap_or_default().trim();
            if line.is_empty() {
                continue;
            }
            let (key, v) = line
                .split_once('=')
                .ok_or_else(|| Error::parse(path, i + 1, "expected key = value"))?;
            let key = key.trim();
            if !seen.insert(key.to_owned()) {
                return Err(Error::parse(path, i + 1, format!("duplicate key {key:?}")));
            }
            config.set(key, v.trim()).map_err(|e| match e {
                Error::Config(msg) => Error::parse(path, i + 1, msg),
                other => other,
            })?;
        }
        config.validate()?;
        Ok(config)
    }

    /// Loads a config file and resolves its relative paths against the
    /// file's directory.
    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut config = Self::parse(&text, path)?;
        if let Some(base) = path.parent() {
            config.resolve(base);
        }
        Ok(config)
    }

    /// Makes relative paths relative to `base`.
    pub fn resolve(&mut self, base: &Path) {
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        for p in [
            &mut self.vocab,
            &mut self.lexicon,
            &mut self.counts,
            &mut self.bias,
            &mut self.train_posteriors,
            &mut self.train_refs,
            &mut self.test_posteriors,
            &mut self.test_refs,
            &mut self.out,
        ] {
            fix(p);
        }
        for p in [&mut self.grammar, &mut self.stopwords].into_iter().flatten() {
            fix(p);
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: &str| Err(Error::Config(msg.into()));
        if self.mode == Mode::Ctc && self.ac_scale.is_some() {
            return bad("ac_scale only applies in wfst mode");
        }
        if self.mode == Mode::Ctc && self.grammar.is_some() {
            return bad("grammar only applies in wfst mode");
        }
        if !self.beta.is_finite() {
            return bad("beta must be finite");
        }
        if self.ac_scale.is_some_and(|s| !(s.is_finite() && s > 0.0)) {
            return bad("ac_scale must be positive");
        }
        if self.beam == Some(0) || self.nbest == 0 || self.asp_nbest == 0 || self.asp_beam == 0 {
            return bad("beam, nbest, asp_nbest and asp_beam must be at least 1");
        }
        if self.mode == Mode::Wfst && self.nbest != 1 {
            return bad("wfst mode produces a single best path; nbest must be 1");
        }
        if !(self.gap.is_finite() && self.gap >= 0.0) {
            return bad("gap must be non-negative");
        }
        if !(self.smoothing.is_finite() && self.smoothing > 0.0) {
            return bad("smoothing must be positive");
        }
        if self.max_run == 0 || self.workers == 0 {
            return bad("max_run and workers must be at least 1");
        }
        Ok(())
    }

    pub fn effective_beam(&self) -> usize {
        self.beam.unwrap_or(match self.mode {
            Mode::Ctc => DEFAULT_BEAM_SIZE,
            Mode::Wfst => DEFAULT_BEAM,
        })
    }

    pub fn effective_ac_scale(&self) -> f64 {
        self.ac_scale.unwrap_or(DEFAULT_ACOUSTIC_SCALE)
    }

    /// Grammar path in wfst mode: the configured one or `grammar.tsv` next to
    /// the vocabulary.
    pub fn grammar_path(&self) -> PathBuf {
        self.grammar.clone().unwrap_or_else(|| {
            self.vocab
                .parent()
                .unwrap_or_else(|| Path::new(""))
                .join("grammar.tsv")
        })
    }

    /// Every key with its value. Mode-specific keys appear only in their mode.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        let mut kv = |k: &str, v: &dyn fmt::Display| {
            let _ = writeln!(out, "{k} = {v}");
        };
        kv("version", &CONFIG_VERSION);
        kv("mode", &self.mode);
        kv("beta", &self.beta);
        if let Some(b) = self.beam {
            kv("beam", &b);
        }
        kv("nbest", &self.nbest);
        if let Some(s) = self.ac_scale {
            kv("ac_scale", &s);
        }
        kv("use_alternates", &self.use_alternates);
        kv("asp_nbest", &self.asp_nbest);
        kv("asp_beam", &self.asp_beam);
        kv("gap", &self.gap);
        kv("common", &self.common);
        kv("smoothing", &self.smoothing);
        kv("max_run", &self.max_run);
        kv("rare_threshold", &self.rare_threshold);
        kv("workers", &self.workers);
        kv("seed", &self.seed);
        kv("vocab", &self.vocab.display());
        kv("lexicon", &self.lexicon.display());
        kv("counts", &self.counts.display());
        if let Some(g) = &self.grammar {
            kv("grammar", &g.display());
        }
        kv("bias", &self.bias.display());
        if let Some(s) = &self.stopwords {
            kv("stopwords", &s.display());
        }
        kv("train_posteriors", &self.train_posteriors.display());
        kv("train_refs", &self.train_refs.display());
        kv("test_posteriors", &self.test_posteriors.display());
        kv("test_refs", &self.test_refs.display());
        kv("out", &self.out.display());
        out
    }
}

/// One decoded hypothesis.
#[derive(Debug, Clone, PartialEq)]
pub struct Hypothesis {
    pub text: String,
    pub score: f64,
}

/// Hypotheses per utterance, best first.
pub type Decodes = BTreeMap<String, Vec<Hypothesis>>;

/// A ready-to-run decoder over borrowed, immutable artifacts.
#[derive(Debug, Clone, Copy)]
pub enum Decoder<'a> {
    Ctc {
        vocab: &'a SubwordVocab,
        options: BeamSearchOptions,
        automaton: Option<&'a BiasAutomaton>,
    },
    Wfst {
        graph: &'a DecodingGraph,
        acoustic_scale: f64,
        beam: usize,
    },
}

impl Decoder<'_> {
    pub fn decode(&self, post: &PosteriorMatrix) -> Vec<Hypothesis> {
        match *self {
            Decoder::Ctc {
                vocab,
                options,
                automaton,
            } => prefix_beam_search(post, vocab, &options, automaton)
                .0
                .into_iter()
                .map(|e| Hypothesis {
                    text: e.text,
                    score: e.score,
                })
                .collect(),
            Decoder::Wfst {
                graph,
                acoustic_scale,
                beam,
            } => {
                let r = wfst_decode(post, graph, acoustic_scale, beam);
                vec![Hypothesis {
                    text: r.text,
                    score: r.score,
                }]
            }
        }
    }
}

fn pool(workers: usize) -> Result<rayon::ThreadPool> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(workers.max(1))
        .build()
        .map_err(|e| Error::Config(format!("cannot start {workers} workers: {e}")))
}

fn check_shape(posteriors: &BTreeMap<String, PosteriorMatrix>, vocab: &SubwordVocab) -> Result<()> {
    match posteriors.iter().find(|(_, m)| m.vocab_size() != vocab.len()) {
        Some((id, m)) => Err(Error::InvalidPosterior(format!(
            "{id}: {} columns but the vocabulary has {} units",
            m.vocab_size(),
            vocab.len()
        ))),
        None => Ok(()),
    }
}

/// Decodes every utterance on `workers` threads. The result does not depend
/// on the worker count.
pub fn decode_corpus(
    posteriors: &BTreeMap<String, PosteriorMatrix>,
    vocab: &SubwordVocab,
    decoder: &Decoder<'_>,
    workers: usize,
) -> Result<Decodes> {
    check_shape(posteriors, vocab)?;
    let items: Vec<(&String, &PosteriorMatrix)> = posteriors.iter().collect();
    let decoded: Vec<Vec<Hypothesis>> =
        pool(workers)?.install(|| items.par_iter().map(|(_, m)| decoder.decode(m)).collect());
    Ok(items
        .into_iter()
        .map(|(id, _)| id.clone())
        .zip(decoded)
        .collect())
}

/// Greedy CTC transcripts for every utterance.
pub fn greedy_corpus(
    posteriors: &BTreeMap<String, PosteriorMatrix>,
    vocab: &SubwordVocab,
    workers: usize,
) -> Result<Transcripts> {
    check_shape(posteriors, vocab)?;
    let items: Vec<(&String, &PosteriorMatrix)> = posteriors.iter().collect();
    let texts: Vec<String> = pool(workers)?
        .install(|| items.par_iter().map(|(_, m)| vocab.detokenize(&greedy_decode(m))).collect());
    Ok(items.into_iter().map(|(id, _)| id.clone()).zip(texts).collect())
}

/// `utt<TAB>rank<TAB>score<TAB>text` rows, ranks from 1.
pub fn decodes_to_text(decodes: &Decodes) -> String {
    let mut out = String::new();
    for (id, hyps) in decodes {
        for (rank, h) in hyps.iter().enumerate() {
            let _ = writeln!(out, "{id}\t{}\t{:.6}\t{}", rank + 1, h.score, h.text);
        }
    }
    out
}

/// Top hypothesis per utterance.
pub fn best_transcripts(decodes: &Decodes) -> Transcripts {
    decodes
        .iter()
        .map(|(id, hyps)| (id.clone(), hyps.first().map(|h| h.text.clone()).unwrap_or_default()))
        .collect()
}

/// Aligns hypotheses to references and mines substitution pairs.
pub fn mine_corpus(
    hyps: &Transcripts,
    refs: &Transcripts,
    stopwords: &Stopwords,
    max_run: usize,
) -> Result<Vec<ErrorPair>> {
    let mut alignments = Vec::with_capacity(refs.len());
    for (id, reference) in refs {
        let hyp = hyps
            .get(id)
            .ok_or_else(|| Error::MissingUtterance { id: id.clone() })?;
        alignments.push(align_text(hyp, reference));
    }
    Ok(mine_pairs(&alignments, stopwords, max_run))
}

/// Generates and filters alternates for every bias term.
pub fn predict_alternates(
    bias: &BiasList,
    model: &ChannelModel,
    counts: &WordCounts,
    generate: &GenerateOptions,
    filter: &FilterOptions,
) -> Alternates {
    let mut out = Alternates::default();
    for term in bias.terms() {
        let set = asp::generate(&term.text(), model, generate);
        for alt in asp::filter(&set, filter, counts, bias).alternates {
            out.insert(&set.term, &alt.text);
        }
    }
    out
}

fn stage<T>(name: &'static str, f: impl FnOnce() -> Result<T>) -> Result<T> {
    log::info!("stage {name}");
    f().map_err(|e| Error::Stage {
        stage: name,
        source: Box::new(e),
    })
}

fn write(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

/// Loads `path` when resuming and it exists, otherwise computes and saves.
fn cached<T>(
    path: &Path,
    resume: bool,
    load: impl FnOnce(&Path) -> Result<T>,
    compute: impl FnOnce() -> Result<T>,
    save: impl FnOnce(&Path, &T) -> Result<()>,
) -> Result<T> {
    if resume && path.exists() {
        log::info!("reusing {}", path.display());
        return load(path);
    }
    let v = compute()?;
    save(path, &v)?;
    Ok(v)
}

/// Runs every stage and writes `report.json` into the run directory.
pub fn run_pipeline(config: &RunConfig, resume: bool) -> Result<RecallReport> {
    config.validate()?;
    let out = &config.out;
    fs::create_dir_all(out).map_err(|e| Error::io(out, e))?;
    write(&out.join(CONFIG_ECHO), &config.to_text())?;

    let (vocab, lexicon, counts, bias, stopwords, test, refs) = stage("load", || {
        let vocab = SubwordVocab::load(&config.vocab)?;
        let lexicon = Lexicon::load(&config.lexicon, &vocab)?;
        let stopwords = match &config.stopwords {
            Some(p) => Stopwords::load(p)?,
            None => Stopwords::builtin(),
        };
        Ok((
            vocab,
            lexicon,
            WordCounts::load(&config.counts)?,
            BiasList::load(&config.bias)?,
            stopwords,
            load_posterior_dir(&config.test_posteriors)?,
            load_transcripts(&config.test_refs)?,
        ))
    })?;

    let alternates = if config.use_alternates {
        let greedy = stage("greedy", || {
            cached(
                &out.join("train_greedy.tsv"),
                resume,
                load_transcripts,
                || greedy_corpus(&load_posterior_dir(&config.train_posteriors)?, &vocab, config.workers),
                save_transcripts,
            )
        })?;
        let pairs = stage("mine", || {
            cached(
                &out.join("pairs.tsv"),
                resume,
                load_pairs,
                || {
                    let train_refs = load_transcripts(&config.train_refs)?;
                    mine_corpus(&greedy, &train_refs, &stopwords, config.max_run)
                },
                |p, pairs: &Vec<ErrorPair>| write(p, &pairs_to_text(pairs)),
            )
        })?;
        if pairs.is_empty() {
            log::warn!("no error pairs mined; decoding without alternates");
            Alternates::default()
        } else {
            let model = stage("train-asp", || {
                cached(
                    &out.join("channel.model"),
                    resume,
                    ChannelModel::load,
                    || asp::train_channel(&pairs, config.smoothing),
                    |p, m: &ChannelModel| m.save(p),
                )
            })?;
            let violations = model.copy_violations();
            if !violations.is_empty() {
                log::warn!("copy is not the most likely operation for {violations:?}");
            }
            stage("alternates", || {
                cached(
                    &out.join("alternates.tsv"),
                    resume,
                    Alternates::load,
                    || {
                        Ok(predict_alternates(
                            &bias,
                            &model,
                            &counts,
                            &GenerateOptions {
                                nbest: config.asp_nbest,
                                beam: config.asp_beam,
                                ..GenerateOptions::default()
                            },
                            &FilterOptions {
                                gap_threshold: config.gap,
                                common_cutoff: config.common,
                            },
                        ))
                    },
                    |p, a: &Alternates| a.save(p),
                )
            })?
        }
    } else {
        Alternates::default()
    };

    let hyps = stage("decode", || {
        cached(
            &out.join("hyp.tsv"),
            resume,
            load_transcripts,
            || {
                let decodes = decode_test(config, &vocab, &lexicon, &bias, &alternates, &stopwords, &test)?;
                let path = out.join("hyp.tsv");
                let text = decodes_to_text(&decodes);
                write(&path, &text)?;
                // Read back through the parser so a resumed run sees the same text.
                parse_transcripts(&text, &path)
            },
            |_, _| Ok(()),
        )
    })?;

    let report = stage("score", || {
        let report = score(
            &hyps,
            &refs,
            &bias,
            &counts,
            &stopwords,
            &ScoreOptions {
                rare_threshold: config.rare_threshold,
            },
        )?;
        report.save(&out.join("report.json"))?;
        Ok(report)
    })?;
    Ok(report)
}

fn decode_test(
    config: &RunConfig,
    vocab: &SubwordVocab,
    lexicon: &Lexicon,
    bias: &BiasList,
    alternates: &Alternates,
    stopwords: &Stopwords,
    test: &BTreeMap<String, PosteriorMatrix>,
) -> Result<Decodes> {
    match config.mode {
        Mode::Ctc => {
            let automaton = compile_automaton(bias, alternates, lexicon, vocab, config.beta, stopwords)?;
            let decoder = Decoder::Ctc {
                vocab,
                options: BeamSearchOptions::new(config.effective_beam(), config.nbest),
                automaton: Some(&automaton),
            };
            decode_corpus(test, vocab, &decoder, config.workers)
        }
        Mode::Wfst => {
            let grammar = UnigramGrammar::load(&config.grammar_path())?;
            let patch = compile_grammar_patch(bias, alternates, config.beta, stopwords);
            let graph = build_graph(lexicon, &grammar, Some(&patch), vocab)?;
            let decoder = Decoder::Wfst {
                graph: &graph,
                acoustic_scale: config.effective_ac_scale(),
                beam: config.effective_beam(),
            };
            decode_corpus(test, vocab, &decoder, config.workers)
        }
    }
}
