mod common;

use std::fs;
use std::panic;
use std::path::Path;
use std::process::ExitCode;
use std::time::{Duration, Instant};

use ctxbias::align::ErrorPair;
use ctxbias::asp::{self, FilterOptions, GenerateOptions};
use ctxbias::bias::{compile_grammar_patch, BiasAutomaton, GrammarPatch, MatchState, Payload};
use ctxbias::ctc::{prefix_beam_search, BeamSearchOptions};
use ctxbias::eval::{score, RecallReport, ScoreOptions};
use ctxbias::fixtures::{gen_fixtures, generate, FixtureSet, FixtureSpec};
use ctxbias::io::{Alternates, BiasList, SubwordVocab, TokenId, Transcripts};
use ctxbias::pipeline::{best_transcripts, decode_corpus, greedy_corpus, predict_alternates, run_pipeline, Decoder, Mode, RunConfig};
use ctxbias::text::Stopwords;
use ctxbias::wfst::{build_graph, DEFAULT_ACOUSTIC_SCALE, DEFAULT_BEAM};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

type Outcome = Result<String, String>;
type Criterion = (&'static str, fn() -> Outcome);

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn within(elapsed: Duration, limit: Duration) -> Result<(), String> {
    ensure(elapsed < limit, || format!("took {elapsed:.2?}, limit {limit:?}"))
}

fn ctc_oracle() -> Outcome {
    let start = Instant::now();
    let units = ["<blank>", "A", "B", "C"];
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut ties = 0;
    for case in 0..500 {
        let frames = rng.gen_range(1..=4);
        let v = rng.gen_range(2..=4);
        let vocab = SubwordVocab::new(units.iter().take(v).copied()).unwrap();
        let m = common::random_matrix(&mut rng, frames, v);
        let oracle = common::ctc_marginals(&m);
        let options = BeamSearchOptions {
            beam_size: 4096,
            nbest: 1,
            token_prune: None,
        };
        let nb = prefix_beam_search(&m, &vocab, &options, None);
        let best = nb.best().ok_or(format!("case {case}: no hypothesis"))?;
        let top = oracle[0].1;
        // Labelings whose marginals agree to rounding are all argmaxes.
        let argmaxes: Vec<&Vec<TokenId>> = oracle.iter().filter(|(_, lp)| top - lp < 1e-12).map(|(l, _)| l).collect();
        ties += usize::from(argmaxes.len() > 1);
        ensure(argmaxes.contains(&&best.tokens), || {
            format!("case {case}: beam gave {:?}, oracle argmax {:?}", best.tokens, oracle[0].0)
        })?;
        ensure((best.score - top).abs() < 1e-9, || format!("case {case}: score {} vs {top}", best.score))?;
    }
    let elapsed = start.elapsed();
    within(elapsed, Duration::from_secs(10))?;
    Ok(format!("500 matrices, {ties} exact ties, {elapsed:.2?}"))
}

fn bias_oracle() -> Outcome {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let mut credited = 0;
    for case in 0..1000 {
        let beta = [0.5, 1.0, 1.5, 2.0][rng.gen_range(0..4)];
        let n_terms = rng.gen_range(1..=5);
        let terms: Vec<Vec<TokenId>> = (0..n_terms)
            .map(|_| (0..rng.gen_range(1..=4)).map(|_| rng.gen_range(1..=3)).collect())
            .collect();
        let tokens: Vec<TokenId> = (0..rng.gen_range(0..=16)).map(|_| rng.gen_range(1..=3)).collect();
        let mut aut = BiasAutomaton::new(beta);
        for (i, t) in terms.iter().enumerate() {
            aut.insert(t, Payload::term(format!("T{i}")));
        }
        let mut state = MatchState::root();
        let mut total = 0.0;
        for &t in &tokens {
            let step = aut.step(state, t);
            total += step.delta;
            state = step.next;
        }
        total += aut.finish(state);
        let count = common::substring_bias_count(&terms, &tokens);
        credited += count;
        let expected = beta * count as f64;
        ensure((total - expected).abs() < 1e-9, || {
            format!("case {case}: terms {terms:?} tokens {tokens:?}: {total} vs {expected}")
        })?;
    }
    let elapsed = start.elapsed();
    within(elapsed, Duration::from_secs(5))?;
    Ok(format!("1000 instances, {credited} credited tokens, {elapsed:.2?}"))
}

fn score_set(set: &FixtureSet, hyps: &Transcripts) -> RecallReport {
    score(hyps, &set.test.references, &set.bias, &set.counts, &Stopwords::builtin(), &ScoreOptions::default()).unwrap()
}

fn wfst_transcripts(set: &FixtureSet, patch: Option<&GrammarPatch>) -> Transcripts {
    let graph = build_graph(&set.lexicon, &set.grammar, patch, &set.vocab).unwrap();
    let decoder = Decoder::Wfst {
        graph: &graph,
        acoustic_scale: DEFAULT_ACOUSTIC_SCALE,
        beam: DEFAULT_BEAM,
    };
    best_transcripts(&decode_corpus(&set.test.posteriors, &set.vocab, &decoder, 4).unwrap())
}

fn oov_structure() -> Outcome {
    // Every word is spoken as written, so OOV words have acoustic support.
    let mut spec = FixtureSpec::default_spec();
    for w in &mut spec.words {
        w.rate = 0.0;
    }
    let set = generate(7, &spec).map_err(|e| e.to_string())?;
    let plain = score_set(&set, &wfst_transcripts(&set, None)).categories.oov;
    ensure(plain.occurrences > 0, || "fixture has no OOV occurrences".into())?;
    ensure(plain.recall == Some(0.0), || format!("unbiased OOV recall {:?}", plain.recall))?;
    let patch = compile_grammar_patch(&set.bias, &Alternates::default(), 4.0, &Stopwords::builtin());
    let biased = score_set(&set, &wfst_transcripts(&set, Some(&patch))).categories.oov;
    let r = biased.recall.unwrap_or(0.0);
    ensure(r > 0.0, || format!("biased OOV recall {r}"))?;
    Ok(format!("{} OOV occurrences, recall 0.000 unbiased, {r:.3} at beta 4", plain.occurrences))
}

fn sweep(dir: &Path, mode: Mode, betas: &[f64]) -> Result<Vec<(f64, f64, f64)>, String> {
    let mut out = Vec::new();
    for &beta in betas {
        let mut c = RunConfig::load(&dir.join("pipeline.conf")).map_err(|e| e.to_string())?;
        c.mode = mode;
        c.beta = beta;
        c.workers = 4;
        c.out = dir.join(format!("run-{mode}-{beta}"));
        let r = run_pipeline(&c, false).map_err(|e| format!("{e:#}"))?;
        out.push((beta, r.categories.word.recall.unwrap_or(0.0), r.wer));
    }
    Ok(out)
}

fn monotone_trend() -> Outcome {
    let dir = tempfile::tempdir().unwrap();
    let set = gen_fixtures(7, &FixtureSpec::default_spec(), dir.path()).map_err(|e| e.to_string())?;
    ensure(set.test.posteriors.len() == 50, || "fixture is not 50 utterances".into())?;
    let mut detail = Vec::new();
    for (mode, betas) in [(Mode::Ctc, &[0.0, 0.5, 1.0, 1.5, 2.0][..]), (Mode::Wfst, &[0.0, 2.0, 4.0, 8.0, 12.0][..])] {
        let rows = sweep(dir.path(), mode, betas)?;
        // The WFST recall sequence is judged over {2,4,8,12}; beta 0 is the WER baseline.
        let judged = if mode == Mode::Wfst { &rows[1..] } else { &rows[..] };
        let recalls: Vec<String> = rows.iter().map(|(b, r, w)| format!("{b}:{r:.3}/{w:.3}")).collect();
        ensure(judged.windows(2).all(|w| w[1].1 >= w[0].1), || format!("{mode} recall not monotone: {recalls:?}"))?;
        let (base, last) = (rows[0].2, rows[rows.len() - 1].2);
        ensure(last >= base, || format!("{mode} WER fell from {base:.4} to {last:.4}"))?;
        detail.push(format!("{mode} recall/WER {}", recalls.join(" ")));
    }
    Ok(detail.join("; "))
}

fn planted_pairs() -> Vec<ErrorPair> {
    let mut pairs = vec![ErrorPair {
        source: "GAYLE".into(),
        target: "GAIL".into(),
    }];
    for (s, t) in [
        ("BARK", "BARC"), ("DOG", "DOC"), ("CAT", "KAT"), ("PAUL", "PAL"), ("MARK", "MARC"),
        ("NICK", "NIK"), ("ANNA", "ANA"), ("ROSS", "ROS"), ("TODD", "TOD"), ("LISA", "LIZA"),
        ("KIRK", "KURK"), ("FRANK", "FRANC"), ("OTTO", "OTO"), ("HUGO", "UGO"), ("IVAN", "IVON"),
        ("CLARK", "CLARC"), ("JON", "JOHN"), ("SAM", "SAMM"), ("TIM", "TIMM"), ("KAT", "CAT"),
        ("ALAN", "ALLAN"),
    ] {
        pairs.push(ErrorPair {
            source: s.into(),
            target: t.into(),
        });
    }
    pairs
}

const GAIL_SPEC: &str = r#"
test_utterances = 30
train_utterances = 1
words_per_utterance = [3, 6]
frames_per_token = 3
second_prob = [0.1, 0.4]
bias = ["Gayle"]

[[word]]
text = "THE"
count = 5000
weight = 3

[[word]]
text = "MARKET"
count = 900
weight = 2

[[word]]
text = "GAYLE"
count = 0
confuse = "GAIL"
rate = 1.0

[[word]]
text = "GAIL"
count = 300
weight = 0
"#;

fn asp_end_to_end() -> Outcome {
    let pairs = planted_pairs();
    ensure(pairs.len() > 20, || "too few filler pairs".into())?;
    let model = asp::train_channel(&pairs, asp::DEFAULT_SMOOTHING).map_err(|e| e.to_string())?;

    let spec = FixtureSpec::parse(GAIL_SPEC).map_err(|e| e.to_string())?;
    let set = generate(3, &spec).map_err(|e| e.to_string())?;
    let alts = predict_alternates(
        &set.bias,
        &model,
        &set.counts,
        &GenerateOptions::default(),
        &FilterOptions::default(),
    );
    let top = asp::generate("GAYLE", &model, &GenerateOptions::default());
    ensure(top.alternates.first().map(|a| a.text.as_str()) == Some("GAIL"), || {
        format!("top alternate {:?}", top.alternates.first())
    })?;
    ensure(alts.get("GAYLE").iter().any(|a| a == "GAIL"), || "GAIL was filtered out".into())?;

    let greedy = greedy_corpus(&set.test.posteriors, &set.vocab, 1).map_err(|e| e.to_string())?;
    let targets: Vec<&String> = set.test.references.iter().filter(|(_, r)| r.contains("GAYLE")).map(|(id, _)| id).collect();
    ensure(!targets.is_empty(), || "no GAYLE utterances".into())?;
    for id in &targets {
        ensure(greedy[*id].contains("GAIL") && !greedy[*id].contains("GAYLE"), || format!("{id}: greedy {}", greedy[*id]))?;
    }

    let stop = Stopwords::builtin();
    let with = compile_grammar_patch(&set.bias, &alts, 4.0, &stop);
    let without = compile_grammar_patch(&set.bias, &Alternates::default(), 4.0, &stop);
    let recovered = |hyps: &Transcripts| targets.iter().filter(|id| hyps[**id] == set.test.references[**id]).count();
    let (hyp_with, hyp_without) = (wfst_transcripts(&set, Some(&with)), wfst_transcripts(&set, Some(&without)));
    let (n_with, n_without) = (recovered(&hyp_with), recovered(&hyp_without));
    ensure(n_with == targets.len(), || {
        let bad: Vec<_> = targets.iter().filter(|id| hyp_with[**id] != set.test.references[**id]).map(|id| &hyp_with[*id]).collect();
        format!("recovered {n_with}/{}: {bad:?}", targets.len())
    })?;
    Ok(format!(
        "top alternate GAIL from {} pairs; {n_with}/{} GAIL utterances decode to GAYLE with alternates, {n_without} without",
        pairs.len(),
        targets.len()
    ))
}

fn filter_contract() -> Outcome {
    common::filter_suite().map(|n| format!("{n} cases"))
}

fn wer_oracle() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let words = ["A", "B", "C", "D", "E"];
    let sentence = |rng: &mut ChaCha8Rng, min: usize| -> Vec<&str> {
        (0..rng.gen_range(min..=8)).map(|_| words[rng.gen_range(0..words.len())]).collect()
    };
    let (bias, counts, stop) = (BiasList::default(), Default::default(), Stopwords::builtin());
    let (mut total_err, mut total_words) = (0, 0);
    let (mut hyps, mut refs) = (Transcripts::new(), Transcripts::new());
    for case in 0..1000 {
        let (h, r) = (sentence(&mut rng, 0), sentence(&mut rng, 1));
        let dist = common::levenshtein(&h, &r);
        let id = format!("u{case:04}");
        let one_h = Transcripts::from([(id.clone(), h.join(" "))]);
        let one_r = Transcripts::from([(id.clone(), r.join(" "))]);
        let rep = score(&one_h, &one_r, &bias, &counts, &stop, &ScoreOptions::default()).map_err(|e| e.to_string())?;
        ensure(rep.errors == dist as u64 && rep.wer == dist as f64 / r.len() as f64, || {
            format!("case {case}: {h:?} vs {r:?}: {} errors, oracle {dist}", rep.errors)
        })?;
        total_err += dist;
        total_words += r.len();
        hyps.insert(id.clone(), h.join(" "));
        refs.insert(id, r.join(" "));
    }
    let rep = score(&hyps, &refs, &bias, &counts, &stop, &ScoreOptions::default()).map_err(|e| e.to_string())?;
    let oracle = total_err as f64 / total_words as f64;
    ensure(rep.wer == oracle, || format!("corpus WER {} vs {oracle}", rep.wer))?;
    Ok(format!("1000 pairs, corpus WER {oracle:.4}"))
}

fn determinism() -> Outcome {
    let dir = tempfile::tempdir().unwrap();
    gen_fixtures(7, &FixtureSpec::default_spec(), dir.path()).map_err(|e| e.to_string())?;
    let mut reports = Vec::new();
    for (name, workers) in [("a", 1), ("b", 1), ("c", 8)] {
        let mut c = RunConfig::load(&dir.path().join("pipeline.conf")).map_err(|e| e.to_string())?;
        c.workers = workers;
        c.out = dir.path().join(name);
        run_pipeline(&c, false).map_err(|e| format!("{e:#}"))?;
        reports.push(fs::read(c.out.join("report.json")).map_err(|e| e.to_string())?);
    }
    ensure(reports[0] == reports[1], || "repeated runs differ".into())?;
    ensure(reports[0] == reports[2], || "1 and 8 workers differ".into())?;
    Ok(format!("3 runs, {} byte report identical", reports[0].len()))
}

fn main() -> ExitCode {
    let criteria: [Criterion; 8] = [
        ("ctc-oracle", ctc_oracle),
        ("bias-oracle", bias_oracle),
        ("oov-structure", oov_structure),
        ("monotone-trend", monotone_trend),
        ("asp-end-to-end", asp_end_to_end),
        ("filter-contract", filter_contract),
        ("wer-oracle", wer_oracle),
        ("determinism", determinism),
    ];
    let mut failed = 0;
    for (i, (name, check)) in criteria.into_iter().enumerate() {
        let start = Instant::now();
        let outcome = panic::catch_unwind(check).unwrap_or_else(|e| {
            let msg = e
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_default();
            Err(format!("panicked: {msg}"))
        });
        let took = start.elapsed();
        match outcome {
            Ok(detail) => println!("PASS {} {name}: {detail} [{took:.2?}]", i + 1),
            Err(detail) => {
                failed += 1;
                println!("FAIL {} {name}: {detail} [{took:.2?}]", i + 1);
            }
        }
    }
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
