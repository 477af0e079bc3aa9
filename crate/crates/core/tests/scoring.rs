mod common;

use std::collections::BTreeMap;

use ctxbias::align::{align, align_text, edit_path, mine_pairs, wer, EditKind, ErrorPair};
use ctxbias::eval::{score, ScoreOptions};
use ctxbias::io::{BiasList, Transcripts, WordCounts};
use ctxbias::text::Stopwords;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn sentence() -> impl Strategy<Value = Vec<String>> {
    prop::collection::vec(prop::sample::select(vec!["A", "B", "C", "THE", "GAYLE"]), 0..10)
        .prop_map(|v| v.into_iter().map(String::from).collect())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(400))]

    #[test]
    fn edit_path_cost_is_levenshtein(h in sentence(), r in sentence()) {
        let a = align(&h, &r);
        prop_assert_eq!(a.errors(), common::levenshtein(&h, &r));
        let ops = edit_path(&h, &r);
        prop_assert_eq!(ops.iter().filter(|o| o.ref_word.is_some()).count(), r.len());
        prop_assert_eq!(ops.iter().filter(|o| o.hyp_word.is_some()).count(), h.len());
        for o in &ops {
            if let (Some(i), Some(j)) = (o.ref_word, o.hyp_word) {
                prop_assert_eq!(o.kind == EditKind::Match, r[i] == h[j]);
            }
        }
    }

    #[test]
    fn utterance_order_does_not_change_the_report(pairs in prop::collection::vec((sentence(), sentence()), 1..6), rot in 0usize..6) {
        let bias = BiasList::from_lines(["Gayle", "B C"]);
        let counts = WordCounts::default();
        let mk = |offset: usize| -> (Transcripts, Transcripts) {
            let n = pairs.len();
            let mut h = Transcripts::new();
            let mut r = Transcripts::new();
            for (i, (hy, re)) in pairs.iter().enumerate() {
                let id = format!("u{:02}", (i + offset) % n);
                h.insert(id.clone(), hy.join(" "));
                r.insert(id, re.join(" "));
            }
            (h, r)
        };
        let (h1, r1) = mk(0);
        let (h2, r2) = mk(rot);
        let a = score(&h1, &r1, &bias, &counts, &Stopwords::builtin(), &ScoreOptions::default()).unwrap();
        let b = score(&h2, &r2, &bias, &counts, &Stopwords::builtin(), &ScoreOptions::default()).unwrap();
        prop_assert_eq!(a.wer, b.wer);
        prop_assert_eq!(a.categories, b.categories);
    }
}

#[test]
fn corpus_wer_equals_dp_distance() {
    let mut rng = ChaCha8Rng::seed_from_u64(99);
    let vocab = ["A", "B", "C", "D", "E"];
    let mut refs = Transcripts::new();
    let mut hyps = Transcripts::new();
    let (mut dist, mut words) = (0, 0);
    for i in 0..300 {
        let r: Vec<&str> = (0..rng.gen_range(1..8)).map(|_| vocab[rng.gen_range(0..5)]).collect();
        let h: Vec<&str> = (0..rng.gen_range(0..8)).map(|_| vocab[rng.gen_range(0..5)]).collect();
        dist += common::levenshtein(&h, &r);
        words += r.len();
        refs.insert(format!("u{i}"), r.join(" "));
        hyps.insert(format!("u{i}"), h.join(" "));
    }
    let report = score(&hyps, &refs, &BiasList::default(), &WordCounts::default(), &Stopwords::empty(), &ScoreOptions::default()).unwrap();
    assert_eq!(report.wer, dist as f64 / words as f64);
    let alignments: Vec<_> = refs.keys().map(|k| align_text(&hyps[k], &refs[k])).collect();
    assert_eq!(wer(&alignments), report.wer);
}

/// With distinct reference words and fresh substitutes, the alignment is the
/// positional one, so hits are exactly the untouched positions.
#[test]
fn recall_matches_positionwise_oracle() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let pool: Vec<String> = (0..20).map(|i| format!("W{i}")).collect();
    let bias_words: Vec<&str> = vec!["W0", "W1", "W2", "W3", "W4", "W5"];
    let bias = BiasList::from_lines(bias_words.iter().copied().chain(["W6 W7"]));
    let mut counts = WordCounts::default();
    for (i, w) in pool.iter().enumerate() {
        counts.set(w.clone(), [0, 5, 500][i % 3]);
    }
    let (mut refs, mut hyps) = (Transcripts::new(), Transcripts::new());
    let (mut occ, mut hit, mut rare_occ, mut rare_hit, mut oov_occ, mut oov_hit) = (0u64, 0u64, 0u64, 0u64, 0u64, 0u64);
    let (mut p_occ, mut p_hit) = (0u64, 0u64);
    for u in 0..200 {
        let mut idx: Vec<usize> = (0..pool.len()).collect();
        for i in 0..idx.len() {
            let j = rng.gen_range(i..idx.len());
            idx.swap(i, j);
        }
        let r: Vec<&str> = idx[..8].iter().map(|&i| pool[i].as_str()).collect();
        let kept: Vec<bool> = (0..8).map(|_| rng.gen_bool(0.6)).collect();
        let h: Vec<String> = r
            .iter()
            .zip(&kept)
            .enumerate()
            .map(|(k, (w, &keep))| if keep { w.to_string() } else { format!("X{u}X{k}") })
            .collect();
        for (k, w) in r.iter().enumerate() {
            if bias_words.contains(w) || *w == "W6" || *w == "W7" {
                let c = counts.get(w);
                occ += 1;
                hit += kept[k] as u64;
                if c < 100 {
                    rare_occ += 1;
                    rare_hit += kept[k] as u64;
                }
                if c == 0 {
                    oov_occ += 1;
                    oov_hit += kept[k] as u64;
                }
            }
            if *w == "W6" && r.get(k + 1) == Some(&"W7") {
                p_occ += 1;
                p_hit += (kept[k] && kept[k + 1]) as u64;
            }
        }
        refs.insert(format!("u{u:03}"), r.join(" "));
        hyps.insert(format!("u{u:03}"), h.join(" "));
    }
    let rep = score(&hyps, &refs, &bias, &counts, &Stopwords::empty(), &ScoreOptions::default()).unwrap();
    let c = &rep.categories;
    assert_eq!((c.word.occurrences, c.word.hits), (occ, hit));
    assert_eq!((c.rare.occurrences, c.rare.hits), (rare_occ, rare_hit));
    assert_eq!((c.oov.occurrences, c.oov.hits), (oov_occ, oov_hit));
    assert_eq!((c.phrase.occurrences, c.phrase.hits), (p_occ, p_hit));
}

#[test]
fn planted_substitution_runs_are_mined_exactly() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let stop = Stopwords::builtin();
    let mut alignments = Vec::new();
    let mut expected = Vec::new();
    for u in 0..100 {
        let (mut r, mut h) = (Vec::new(), Vec::new());
        for k in 0..rng.gen_range(1..5) {
            r.push(format!("KEEP{k}"));
            h.push(format!("KEEP{k}"));
            let run = rng.gen_range(0..=3);
            let src: Vec<String> = (0..run).map(|j| format!("SRC{u}X{k}X{j}")).collect();
            let tgt: Vec<String> = (0..run).map(|j| format!("TGT{u}X{k}X{j}")).collect();
            if run > 0 {
                expected.push(ErrorPair { source: src.join(" "), target: tgt.join(" ") });
            }
            r.extend(src);
            h.extend(tgt);
        }
        // A substituted stopword on its own is never mined.
        r.push("SEP".into());
        h.push("SEP".into());
        r.push("THE".into());
        h.push("A".into());
        r.push("END".into());
        h.push("END".into());
        alignments.push(align(&h, &r));
    }
    assert_eq!(mine_pairs(&alignments, &stop, 3), expected);
}

#[test]
fn mined_runs_split_at_max_run() {
    let a = align_text("W X Y Z", "A B C D");
    let pairs = mine_pairs([&a], &Stopwords::empty(), 3);
    let got: BTreeMap<_, _> = pairs.iter().map(|p| (p.source.as_str(), p.target.as_str())).collect();
    assert_eq!(got, BTreeMap::from([("A B C", "W X Y"), ("D", "Z")]));
}
