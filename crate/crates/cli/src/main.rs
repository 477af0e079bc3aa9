use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::OnceLock;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};

use ctxbias::align::{pairs_to_text, load_pairs, DEFAULT_MAX_RUN};
use ctxbias::asp::{self, ChannelModel, FilterOptions, GenerateOptions};
use ctxbias::bias::{compile_automaton, compile_grammar_patch};
use ctxbias::ctc::{BeamSearchOptions, DEFAULT_BEAM_SIZE};
use ctxbias::eval::{score, ScoreOptions, DEFAULT_RARE_THRESHOLD};
use ctxbias::fixtures::{gen_fixtures, FixtureSpec};
use ctxbias::io::{
    load_posterior_dir, load_transcripts, save_transcripts, Alternates, BiasList, Lexicon,
    PosteriorMatrix, SubwordVocab, WordCounts,
};
use ctxbias::pipeline::{
    decode_corpus, decodes_to_text, greedy_corpus, mine_corpus, predict_alternates, run_pipeline,
    Decoder, Mode, RunConfig,
};
use ctxbias::text::Stopwords;
use ctxbias::wfst::{build_graph, UnigramGrammar, DEFAULT_ACOUSTIC_SCALE, DEFAULT_BEAM};

fn version_text() -> &'static str {
    static TEXT: OnceLock<String> = OnceLock::new();
    TEXT.get_or_init(|| {
        let mut s = env!("CARGO_PKG_VERSION").to_owned();
        s.push_str("\nformats:");
        for (name, v) in ctxbias::format_versions() {
            s.push_str(&format!("\n  {name} {v}"));
        }
        s
    })
}

/// Contextual biasing over CTC posteriors.
#[derive(Parser)]
#[command(name = "ctxbias", version = version_text())]
struct Cli {
    /// More log output (-v info, -vv debug).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Decode posterior matrices with optional biasing.
    Decode(DecodeArgs),
    /// Align hypotheses to references and extract substitution pairs.
    MineErrors(MineArgs),
    /// Train the character channel model on error pairs.
    TrainAsp(TrainArgs),
    /// Predict and filter alternate spellings for a bias list.
    Alternates(AlternatesArgs),
    /// Compute WER and bias-term recall.
    Score(ScoreArgs),
    /// Write a seeded synthetic fixture set.
    GenFixtures(GenArgs),
    /// Run every stage from a config file.
    #[command(alias = "run-pipeline")]
    Run(RunArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum CliMode {
    Ctc,
    Wfst,
}

#[derive(Args)]
struct DecodeArgs {
    #[arg(long, value_enum, default_value = "ctc")]
    mode: CliMode,
    /// A posterior file or a directory of them.
    #[arg(long)]
    posteriors: PathBuf,
    #[arg(long)]
    vocab: PathBuf,
    #[arg(long)]
    lexicon: Option<PathBuf>,
    /// Unigram grammar (wfst mode).
    #[arg(long)]
    grammar: Option<PathBuf>,
    /// Bias list; without it decoding is unbiased.
    #[arg(long)]
    bias: Option<PathBuf>,
    #[arg(long, requires = "bias")]
    alternates: Option<PathBuf>,
    #[arg(long)]
    stopwords: Option<PathBuf>,
    #[arg(long, default_value_t = 1.0)]
    beta: f64,
    /// Defaults to 10 in ctc mode and 200 in wfst mode.
    #[arg(long)]
    beam: Option<usize>,
    #[arg(long, default_value_t = 1)]
    nbest: usize,
    /// Acoustic scale (wfst mode).
    #[arg(long)]
    ac_scale: Option<f64>,
    /// Greedy CTC output instead of beam search.
    #[arg(long, conflicts_with_all = ["bias", "grammar"])]
    greedy: bool,
    #[arg(long, default_value_t = 1)]
    workers: usize,
    /// Output `utt<TAB>rank<TAB>score<TAB>text` rows (greedy: `utt<TAB>text`).
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct MineArgs {
    #[arg(long)]
    hyp: PathBuf,
    #[arg(long = "ref")]
    reference: PathBuf,
    #[arg(long)]
    stopwords: Option<PathBuf>,
    #[arg(long, default_value_t = DEFAULT_MAX_RUN)]
    max_run: usize,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct TrainArgs {
    #[arg(long)]
    pairs: PathBuf,
    #[arg(long, default_value_t = asp::DEFAULT_SMOOTHING)]
    smoothing: f64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct AlternatesArgs {
    #[arg(long)]
    model: PathBuf,
    #[arg(long)]
    bias: PathBuf,
    #[arg(long)]
    counts: PathBuf,
    #[arg(long, default_value_t = asp::DEFAULT_NBEST)]
    nbest: usize,
    #[arg(long, default_value_t = GenerateOptions::default().beam)]
    beam: usize,
    #[arg(long, default_value_t = asp::DEFAULT_GAP)]
    gap: f64,
    #[arg(long, default_value_t = asp::DEFAULT_COMMON_CUTOFF)]
    common: u64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct ScoreArgs {
    #[arg(long)]
    hyp: PathBuf,
    #[arg(long = "ref")]
    reference: PathBuf,
    #[arg(long)]
    bias: PathBuf,
    #[arg(long)]
    counts: PathBuf,
    #[arg(long)]
    stopwords: Option<PathBuf>,
    #[arg(long, default_value_t = DEFAULT_RARE_THRESHOLD)]
    rare_threshold: u64,
    /// Report path; printed to stdout when absent.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct GenArgs {
    #[arg(long, default_value_t = 7)]
    seed: u64,
    /// TOML fixture spec; the shipped spec when absent.
    #[arg(long)]
    spec: Option<PathBuf>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct RunArgs {
    #[arg(long)]
    config: PathBuf,
    /// Reuse intermediate files already present in the output directory.
    #[arg(long)]
    resume: bool,
    #[arg(long, value_enum)]
    mode: Option<CliMode>,
    #[arg(long)]
    beta: Option<f64>,
    #[arg(long)]
    workers: Option<usize>,
    #[arg(long)]
    out: Option<PathBuf>,
    /// Override any config key, e.g. `--set beam=16`.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
}

fn main() {
    let cli = Cli::parse();
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    if let Err(e) = run(cli.command) {
        eprintln!("error: {e:#}");
        std::process::exit(1);
    }
}

fn run(command: Command) -> Result<()> {
    match command {
        Command::Decode(a) => decode(a),
        Command::MineErrors(a) => {
            let hyps = load_transcripts(&a.hyp)?;
            let refs = load_transcripts(&a.reference)?;
            let pairs = mine_corpus(&hyps, &refs, &stopwords(a.stopwords.as_deref())?, a.max_run)?;
            write(&a.out, &pairs_to_text(&pairs))?;
            log::info!("{} pairs", pairs.len());
            Ok(())
        }
        Command::TrainAsp(a) => {
            let pairs = load_pairs(&a.pairs)?;
            let model = asp::train_channel(&pairs, a.smoothing)?;
            let violations = model.copy_violations();
            if !violations.is_empty() {
                log::warn!("copy is not the most likely operation for {violations:?}");
            }
            model.save(&a.out)?;
            Ok(())
        }
        Command::Alternates(a) => {
            let model = ChannelModel::load(&a.model)?;
            let alts = predict_alternates(
                &BiasList::load(&a.bias)?,
                &model,
                &WordCounts::load(&a.counts)?,
                &GenerateOptions {
                    nbest: a.nbest,
                    beam: a.beam,
                    ..GenerateOptions::default()
                },
                &FilterOptions {
                    gap_threshold: a.gap,
                    common_cutoff: a.common,
                },
            );
            alts.save(&a.out)?;
            Ok(())
        }
        Command::Score(a) => {
            let report = score(
                &load_transcripts(&a.hyp)?,
                &load_transcripts(&a.reference)?,
                &BiasList::load(&a.bias)?,
                &WordCounts::load(&a.counts)?,
                &stopwords(a.stopwords.as_deref())?,
                &ScoreOptions {
                    rare_threshold: a.rare_threshold,
                },
            )?;
            match a.out {
                Some(p) => report.save(&p)?,
                None => print!("{}", report.to_json()),
            }
            Ok(())
        }
        Command::GenFixtures(a) => {
            let spec = match &a.spec {
                Some(p) => FixtureSpec::load(p)?,
                None => FixtureSpec::default_spec(),
            };
            let set = gen_fixtures(a.seed, &spec, &a.out)?;
            println!(
                "wrote {} test and {} train utterances to {}",
                set.test.posteriors.len(),
                set.train.posteriors.len(),
                a.out.display()
            );
            Ok(())
        }
        Command::Run(a) => {
            let mut config = RunConfig::load(&a.config)?;
            if let Some(m) = a.mode {
                config.mode = mode(m);
            }
            if let Some(b) = a.beta {
                config.beta = b;
            }
            if let Some(w) = a.workers {
                config.workers = w;
            }
            if let Some(o) = a.out {
                config.out = o;
            }
            for kv in &a.overrides {
                let (k, v) = kv
                    .split_once('=')
                    .with_context(|| format!("--set expects KEY=VALUE, got {kv:?}"))?;
                config.set(k.trim(), v.trim())?;
            }
            config.validate()?;
            let report = run_pipeline(&config, a.resume)?;
            println!(
                "WER {:.4}  word recall {}  report {}",
                report.wer,
                report
                    .categories
                    .word
                    .recall
                    .map_or("n/a".to_owned(), |r| format!("{r:.4}")),
                config.out.join("report.json").display()
            );
            Ok(())
        }
    }
}

fn mode(m: CliMode) -> Mode {
    match m {
        CliMode::Ctc => Mode::Ctc,
        CliMode::Wfst => Mode::Wfst,
    }
}

fn stopwords(path: Option<&Path>) -> Result<Stopwords> {
    Ok(match path {
        Some(p) => Stopwords::load(p)?,
        None => Stopwords::builtin(),
    })
}

fn write(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

fn load_posteriors(path: &Path) -> Result<BTreeMap<String, PosteriorMatrix>> {
    if path.is_dir() {
        return Ok(load_posterior_dir(path)?);
    }
    let id = path
        .file_stem()
        .and_then(|s| s.to_str())
        .with_context(|| format!("bad posterior path {}", path.display()))?
        .to_owned();
    Ok(BTreeMap::from([(id, PosteriorMatrix::load(path)?)]))
}

fn decode(a: DecodeArgs) -> Result<()> {
    let vocab = SubwordVocab::load(&a.vocab)?;
    let posteriors = load_posteriors(&a.posteriors)?;
    if a.greedy {
        let texts = greedy_corpus(&posteriors, &vocab, a.workers)?;
        save_transcripts(&a.out, &texts)?;
        return Ok(());
    }
    let lexicon = match &a.lexicon {
        Some(p) => Lexicon::load(p, &vocab)?,
        None => Lexicon::default(),
    };
    let stopwords = stopwords(a.stopwords.as_deref())?;
    let bias = a.bias.as_deref().map(BiasList::load).transpose()?;
    let alternates = match &a.alternates {
        Some(p) => Alternates::load(p)?,
        None => Alternates::default(),
    };
    let decodes = match a.mode {
        CliMode::Ctc => {
            if a.ac_scale.is_some() || a.grammar.is_some() {
                bail!("--ac-scale and --grammar only apply in wfst mode");
            }
            let automaton = bias
                .as_ref()
                .map(|b| compile_automaton(b, &alternates, &lexicon, &vocab, a.beta, &stopwords))
                .transpose()?;
            let decoder = Decoder::Ctc {
                vocab: &vocab,
                options: BeamSearchOptions::new(a.beam.unwrap_or(DEFAULT_BEAM_SIZE), a.nbest),
                automaton: automaton.as_ref(),
            };
            decode_corpus(&posteriors, &vocab, &decoder, a.workers)?
        }
        CliMode::Wfst => {
            if a.nbest != 1 {
                bail!("wfst mode produces a single best path; use --nbest 1");
            }
            let grammar_path = a.grammar.as_deref().context("wfst mode needs --grammar")?;
            let grammar = UnigramGrammar::load(grammar_path)?;
            let patch = bias
                .as_ref()
                .map(|b| compile_grammar_patch(b, &alternates, a.beta, &stopwords));
            let graph = build_graph(&lexicon, &grammar, patch.as_ref(), &vocab)?;
            let decoder = Decoder::Wfst {
                graph: &graph,
                acoustic_scale: a.ac_scale.unwrap_or(DEFAULT_ACOUSTIC_SCALE),
                beam: a.beam.unwrap_or(DEFAULT_BEAM),
            };
            decode_corpus(&posteriors, &vocab, &decoder, a.workers)?
        }
    };
    write(&a.out, &decodes_to_text(&decodes))
}
