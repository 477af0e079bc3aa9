//! Brute-force reference implementations shared by the integration tests and
//! the acceptance harness.

#![allow(dead_code)]

use std::collections::{BTreeMap, HashMap};

use ctxbias::asp::{ChannelModel, Context, EditOperation};
use ctxbias::io::{PosteriorMatrix, TokenId, BLANK};
use ctxbias::logmath::{log_add, LOG_ZERO};
use rand::Rng;
use rand_chacha::ChaCha8Rng;

/// Random normalized matrix with `frames` rows over `vocab` tokens.
pub fn random_matrix(rng: &mut ChaCha8Rng, frames: usize, vocab: usize) -> PosteriorMatrix {
    let rows: Vec<Vec<f64>> = (0..frames)
        .map(|_| (0..vocab).map(|_| rng.gen::<f64>().powi(2) + 1e-3).collect())
        .collect();
    PosteriorMatrix::from_probs(&rows).unwrap()
}

/// Collapses a frame path: merge repeats, then drop blanks.
pub fn collapse(path: &[TokenId]) -> Vec<TokenId> {
    let mut out = Vec::new();
    let mut prev = None;
    for &t in path {
        if Some(t) != prev && t != BLANK {
            out.push(t);
        }
        prev = Some(t);
    }
    out
}

/// Every frame path with its log-probability.
pub fn frame_paths(post: &PosteriorMatrix) -> Vec<(Vec<TokenId>, f64)> {
    let (t_max, v) = (post.frames(), post.vocab_size());
    let mut out = Vec::with_capacity(v.pow(t_max as u32));
    let mut path = vec![0 as TokenId; t_max];
    loop {
        let lp: f64 = path.iter().enumerate().map(|(t, &c)| post.logp(t, c)).sum();
        out.push((path.clone(), lp));
        let mut i = 0;
        loop {
            if i == t_max {
                return out;
            }
            path[i] += 1;
            if (path[i] as usize) < v {
                break;
            }
            path[i] = 0;
            i += 1;
        }
    }
}

/// Label sequences with their CTC marginal probability, best first.
pub fn ctc_marginals(post: &PosteriorMatrix) -> Vec<(Vec<TokenId>, f64)> {
    let mut by_label: BTreeMap<Vec<TokenId>, f64> = BTreeMap::new();
    for (path, lp) in frame_paths(post) {
        let e = by_label.entry(collapse(&path)).or_insert(LOG_ZERO);
        *e = log_add(*e, lp);
    }
    let mut out: Vec<_> = by_label.into_iter().collect();
    out.sort_by(|a, b| b.1.total_cmp(&a.1));
    out
}

/// Label sequences with their best single alignment (Viterbi), best first.
pub fn ctc_viterbi(post: &PosteriorMatrix) -> BTreeMap<Vec<TokenId>, f64> {
    let mut by_label: BTreeMap<Vec<TokenId>, f64> = BTreeMap::new();
    for (path, lp) in frame_paths(post) {
        let e = by_label.entry(collapse(&path)).or_insert(f64::NEG_INFINITY);
        *e = e.max(lp);
    }
    by_label
}

/// Bias credit from a plain scan over the term list: at each position take
/// the longest common prefix with any term, credit the longest term that is a
/// whole prefix there, and resume after the common prefix (or one token on).
pub fn substring_bias_count(terms: &[Vec<TokenId>], tokens: &[TokenId]) -> usize {
    let mut i = 0;
    let mut credited = 0;
    while i < tokens.len() {
        let rest = &tokens[i..];
        let lcp = terms
            .iter()
            .map(|t| t.iter().zip(rest).take_while(|(a, b)| a == b).count())
            .max()
            .unwrap_or(0);
        let whole = terms
            .iter()
            .filter(|t| t.len() <= rest.len() && rest.starts_with(t))
            .map(Vec::len)
            .max()
            .unwrap_or(0);
        credited += whole;
        i += lcp.max(1);
    }
    credited
}

/// Textbook two-row Levenshtein distance.
pub fn levenshtein<T: PartialEq>(a: &[T], b: &[T]) -> usize {
    let mut prev: Vec<usize> = (0..=b.len()).collect();
    let mut cur = vec![0; b.len() + 1];
    for (i, x) in a.iter().enumerate() {
        cur[0] = i + 1;
        for (j, y) in b.iter().enumerate() {
            cur[j + 1] = (prev[j] + usize::from(x != y)).min(prev[j + 1] + 1).min(cur[j] + 1);
        }
        std::mem::swap(&mut prev, &mut cur);
    }
    prev[b.len()]
}

/// Every output of the edit lattice for `term` with at most `max_insertions`
/// insertions before each source position (and before the end), scored by
/// the best op sequence producing it.
pub fn lattice_outputs(term: &str, model: &ChannelModel, max_insertions: usize) -> HashMap<String, f64> {
    #[allow(clippy::too_many_arguments)]
    fn walk(
        src: &[char],
        i: usize,
        inserted: usize,
        max_ins: usize,
        model: &ChannelModel,
        out: String,
        score: f64,
        acc: &mut HashMap<String, f64>,
    ) {
        let ctx = src.get(i).map_or(Context::End, |&c| Context::Char(c));
        for &(op, q) in model.ops(ctx) {
            let s = score + q;
            match op {
                EditOperation::Insert(c) if inserted < max_ins => {
                    let mut o = out.clone();
                    o.push(c);
                    walk(src, i, inserted + 1, max_ins, model, o, s, acc);
                }
                EditOperation::Insert(_) => {}
                EditOperation::Copy => walk(src, i + 1, 0, max_ins, model, format!("{out}{}", src[i]), s, acc),
                EditOperation::Substitute(c) => walk(src, i + 1, 0, max_ins, model, format!("{out}{c}"), s, acc),
                EditOperation::Delete => walk(src, i + 1, 0, max_ins, model, out.clone(), s, acc),
                EditOperation::End => {
                    let e = acc.entry(out.clone()).or_insert(f64::NEG_INFINITY);
                    *e = e.max(s);
                }
            }
        }
    }
    let src: Vec<char> = term.chars().collect();
    let mut acc = HashMap::new();
    walk(&src, 0, 0, max_insertions, model, String::new(), 0.0, &mut acc);
    acc
}

/// Uniformly random word over a small alphabet.
pub fn random_word(rng: &mut ChaCha8Rng, alphabet: &[u8], max_len: usize) -> String {
    let n = rng.gen_range(1..=max_len);
    (0..n).map(|_| alphabet[rng.gen_range(0..alphabet.len())] as char).collect()
}

/// The alternate-filter contract with n-best 5, gap 1.0 and common cutoff
/// 1000. Returns the first violated expectation.
pub fn filter_suite() -> Result<usize, String> {
    use ctxbias::asp::{filter, Alternate, AlternateSet, FilterOptions};
    use ctxbias::io::{BiasList, WordCounts};

    let opts = FilterOptions {
        gap_threshold: 1.0,
        common_cutoff: 1000,
    };
    let set = |lls: &[(&str, f64)]| AlternateSet {
        term: "GAYLE".into(),
        alternates: lls
            .iter()
            .map(|&(t, l)| Alternate {
                text: t.into(),
                log_likelihood: l,
            })
            .collect(),
    };
    let kept = |s: &AlternateSet| s.alternates.iter().map(|a| a.text.clone()).collect::<Vec<_>>();
    let mut counts = WordCounts::default();
    counts.set("GAIL", 300);
    counts.set("GALE", 5000);
    counts.set("THE", 90000);
    counts.set("GAL", 1000);
    let bias = BiasList::from_lines(["Gayle", "Gail Smith"]);
    let empty_bias = BiasList::from_lines(["Gayle"]);
    let mut checked = 0;
    let mut expect = |name: &str, got: Vec<String>, want: &[&str]| -> Result<(), String> {
        checked += 1;
        if got == want {
            Ok(())
        } else {
            Err(format!("{name}: kept {got:?}, expected {want:?}"))
        }
    };

    // Gap rule: -1.0 -> -1.5 is within 1.0, -1.5 -> -3.0 is not; scanning stops.
    let gap = set(&[("GAYL", -1.0), ("GAYEL", -1.5), ("GAYLEE", -3.0), ("GAYLLE", -3.1)]);
    expect("gap", kept(&filter(&gap, &opts, &counts, &empty_bias)), &["GAYL", "GAYEL"])?;
    // A gap of exactly the threshold is allowed.
    let edge = set(&[("GAYL", -1.0), ("GAYEL", -2.0)]);
    expect("gap-edge", kept(&filter(&edge, &opts, &counts, &empty_bias)), &["GAYL", "GAYEL"])?;
    // Common words (every word seen more than 1000 times) are dropped; the
    // scan goes on. A count of exactly the cutoff is not common.
    let common = set(&[("GALE", -1.0), ("GAL", -1.2), ("THE GAIL", -1.3), ("THE GALE", -1.4)]);
    expect("common", kept(&filter(&common, &opts, &counts, &empty_bias)), &["GAL", "THE GAIL"])?;
    // The gap is also measured from the last kept alternate, skipping dropped ones.
    let dropped = set(&[("GAIL", -1.0), ("GALE", -1.9), ("GAILE", -1.95)]);
    expect("dropped-gap", kept(&filter(&dropped, &opts, &counts, &empty_bias)), &["GAIL", "GAILE"])?;
    let far = set(&[("GAIL", -1.0), ("GALE", -1.9), ("GAILE", -2.5)]);
    expect("kept-gap", kept(&filter(&far, &opts, &counts, &empty_bias)), &["GAIL"])?;
    // Spellings that collide with the bias list are dropped.
    let collide = set(&[("GAIL", -1.0), ("GAIL SMITH", -1.1), ("GAYLE", -1.2), ("GAYLLE", -1.3)]);
    expect("collision", kept(&filter(&collide, &opts, &counts, &bias)), &["GAYLLE"])?;
    // Filtering is idempotent.
    let once = filter(&gap, &opts, &counts, &empty_bias);
    expect("idempotent", kept(&filter(&once, &opts, &counts, &empty_bias)), &["GAYL", "GAYEL"])?;
    // n-best 5 bounds what reaches the filter.
    let mut model_pairs = Vec::new();
    for (s, t) in [("GAYLE", "GAIL"), ("BAKER", "BAKR"), ("DAVE", "DAV"), ("KAREN", "CAREN")] {
        model_pairs.push(ctxbias::align::ErrorPair {
            source: s.into(),
            target: t.into(),
        });
    }
    let model = ctxbias::asp::train_channel(&model_pairs, 0.1).map_err(|e| e.to_string())?;
    let generated = ctxbias::asp::generate(
        "GAYLE",
        &model,
        &ctxbias::asp::GenerateOptions {
            nbest: 5,
            ..Default::default()
        },
    );
    let n = generated.alternates.len();
    let sorted = generated
        .alternates
        .windows(2)
        .all(|w| w[0].log_likelihood >= w[1].log_likelihood);
    let got = vec![format!("{n} sorted={sorted}")];
    expect("nbest", got, &["5 sorted=true"])?;
    Ok(checked)
}
