//! Seeded synthetic corpora.
//!
//! A [`FixtureSpec`] lists the words of a toy domain, how often each is
//! spoken, and how it is misrecognized. [`generate`] turns it into posterior
//! matrices whose greedy decode is the scripted (possibly corrupted)
//! transcript while the reference holds the clean one, together with the
//! vocabulary, lexicon, counts, grammar and bias list a pipeline run needs.
//!
//! Each emitting frame puts the recognized token on top and the competing
//! spelling second, so biasing can recover the spoken word when its bonus
//! outweighs the acoustic gap. A column of `frames_per_token - 1` emitting
//! frames is always followed by one blank frame.

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::path::Path;

use rand::distributions::{Distribution, WeightedIndex};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::align::{edit_path, EditKind};
use crate::ctc::greedy_decode;
use crate::error::{Error, Result};
use crate::io::{
    save_transcripts, BiasList, Lexicon, PosteriorMatrix, SubwordVocab, TokenId, Transcripts,
    WordCounts, BINARY_EXT, BLANK, WORD_MARKER,
};
use crate::pipeline::RunConfig;
use crate::text::{normalize, words};
use crate::wfst::UnigramGrammar;

pub const SPEC_VERSION: u32 = 1;

/// The spec behind the shipped fixture set: an earnings-call toy domain with
/// rare and unseen bias terms and a few distractor spellings.
pub const DEFAULT_SPEC: &str = include_str!("../data/fixture_default.toml");

const BLANK_UNIT: &str = "<blank>";

/// One spoken entry. `text` may hold several words; they are always sampled
/// together.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FixtureWord {
    pub text: String,
    /// Training-text count of each word. Words listed in several entries get
    /// the largest count; 0 makes the word out-of-vocabulary.
    #[serde(default)]
    pub count: u64,
    /// Relative sampling weight. 0 keeps the word in the counts only.
    #[serde(default = "one")]
    pub weight: f64,
    /// What the recognizer outputs when the entry is corrupted.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub confuse: Option<String>,
    /// Probability of corruption.
    #[serde(default)]
    pub rate: f64,
    /// Runner-up spelling on uncorrupted occurrences.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub shadow: Option<String>,
}

fn one() -> f64 {
    1.0
}

fn spec_version() -> u32 {
    SPEC_VERSION
}

fn default_noise() -> f64 {
    0.02
}

fn default_blank() -> f64 {
    0.05
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FixtureSpec {
    #[serde(default = "spec_version")]
    pub version: u32,
    pub test_utterances: usize,
    #[serde(default)]
    pub train_utterances: usize,
    /// Inclusive range of entries per utterance.
    pub words_per_utterance: [usize; 2],
    /// Frames per token column, the trailing blank frame included.
    pub frames_per_token: usize,
    /// Blank probability on emitting frames. The recognized token takes what
    /// the blank and the runner-up leave.
    #[serde(default = "default_blank")]
    pub blank_prob: f64,
    /// Range of the runner-up's probability on emitting frames.
    pub second_prob: [f64; 2],
    /// Probability mass spread uniformly over all tokens on every frame.
    #[serde(default = "default_noise")]
    pub noise: f64,
    #[serde(default)]
    pub bias: Vec<String>,
    /// Bias terms that never occur in the references.
    #[serde(default)]
    pub distractors: Vec<String>,
    /// Explicit unit inventory (blank excluded). When absent the vocabulary is
    /// `▁` plus a word-initial and a word-internal unit per character.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub units: Option<Vec<String>>,
    #[serde(rename = "word")]
    pub words: Vec<FixtureWord>,
}

impl FixtureSpec {
    pub fn parse(text: &str) -> Result<Self> {
        let spec: FixtureSpec =
            toml::from_str(text).map_err(|e| Error::Config(format!("fixture spec: {e}")))?;
        spec.validate()?;
        Ok(spec)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text).map_err(|e| match e {
            Error::Config(msg) => Error::Config(format!("{}: {msg}", path.display())),
            other => other,
        })
    }

    pub fn default_spec() -> Self {
        Self::parse(DEFAULT_SPEC).expect("shipped fixture spec is valid")
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("fixture spec serializes")
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::Config(msg));
        if self.version != SPEC_VERSION {
            return bad(format!("unsupported fixture spec version {}", self.version));
        }
        if self.test_utterances == 0 {
            return bad("test_utterances must be at least 1".into());
        }
        let [lo, hi] = self.words_per_utterance;
        if lo == 0 || lo > hi {
            return bad(format!("words_per_utterance [{lo}, {hi}] is not a range of positive sizes"));
        }
        if self.frames_per_token < 2 {
            return bad("frames_per_token must be at least 2".into());
        }
        if !(0.0..0.5).contains(&self.blank_prob) {
            return bad(format!("blank_prob {} must lie in [0, 0.5)", self.blank_prob));
        }
        let [slo, shi] = self.second_prob;
        let ceiling = (1.0 - self.blank_prob) / 2.0;
        if !(slo >= 0.0 && slo <= shi && shi < ceiling) {
            return bad(format!("second_prob [{slo}, {shi}] must lie in [0, {ceiling})"));
        }
        if !(0.0..0.5).contains(&self.noise) {
            return bad(format!("noise {} must lie in [0, 0.5)", self.noise));
        }
        if self.words.is_empty() {
            return bad("spec lists no words".into());
        }
        for w in &self.words {
            if normalize(&w.text).is_empty() {
                return bad(format!("word entry {:?} is empty after normalization", w.text));
            }
            if !(w.weight >= 0.0 && w.weight.is_finite()) {
                return bad(format!("{:?}: weight must be finite and non-negative", w.text));
            }
            if !(0.0..=1.0).contains(&w.rate) {
                return bad(format!("{:?}: rate must lie in [0, 1]", w.text));
            }
            match &w.confuse {
                None if w.rate > 0.0 => {
                    return bad(format!("{:?}: rate > 0 needs a confuse target", w.text))
                }
                Some(c) if normalize(c) == normalize(&w.text) => {
                    return bad(format!("{:?}: confuse target equals the word", w.text))
                }
                Some(c) if normalize(c).is_empty() => {
                    return bad(format!("{:?}: confuse target is empty", w.text))
                }
                _ => {}
            }
            if w.shadow.as_deref().is_some_and(|s| normalize(s).is_empty()) {
                return bad(format!("{:?}: shadow is empty", w.text));
            }
        }
        if self.words.iter().all(|w| w.weight == 0.0) {
            return bad("every word has weight 0".into());
        }
        Ok(())
    }

    /// Every spelling the spec mentions, normalized.
    fn spellings(&self) -> BTreeSet<String> {
        let mut out = BTreeSet::new();
        for w in &self.words {
            out.insert(normalize(&w.text));
            out.extend(w.confuse.as_deref().map(normalize));
            out.extend(w.shadow.as_deref().map(normalize));
        }
        out.extend(self.bias.iter().chain(&self.distractors).map(|s| normalize(s)));
        out.remove("");
        out
    }
}

/// One split of generated utterances, keyed by utterance id.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct FixtureSplit {
    pub posteriors: BTreeMap<String, PosteriorMatrix>,
    /// Clean transcripts.
    pub references: Transcripts,
    /// What greedy decoding of each matrix yields.
    pub scripted: Transcripts,
}

impl FixtureSplit {
    fn write(&self, dir: &Path) -> Result<()> {
        let post_dir = dir.join("posteriors");
        fs::create_dir_all(&post_dir).map_err(|e| Error::io(&post_dir, e))?;
        for (id, m) in &self.posteriors {
            m.save_binary(&post_dir.join(format!("{id}.{BINARY_EXT}")))?;
        }
        save_transcripts(&dir.join("ref.tsv"), &self.references)?;
        save_transcripts(&dir.join("scripted.tsv"), &self.scripted)
    }
}

#[derive(Debug, Clone)]
pub struct FixtureSet {
    pub seed: u64,
    pub spec: FixtureSpec,
    pub vocab: SubwordVocab,
    pub lexicon: Lexicon,
    pub counts: WordCounts,
    pub grammar: UnigramGrammar,
    pub bias: BiasList,
    pub test: FixtureSplit,
    pub train: FixtureSplit,
}

impl FixtureSet {
    /// Writes the layout that [`RunConfig::default`] points at:
    ///
    /// ```text
    /// vocab.txt lexicon.tsv counts.tsv grammar.tsv bias.txt
    /// fixture.toml pipeline.conf
    /// test/{posteriors/*.ctcp, ref.tsv, scripted.tsv}
    /// train/{posteriors/*.ctcp, ref.tsv, scripted.tsv}
    /// ```
    pub fn write(&self, dir: &Path) -> Result<()> {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        self.vocab.save(&dir.join("vocab.txt"))?;
        self.lexicon.save(&dir.join("lexicon.tsv"))?;
        self.counts.save(&dir.join("counts.tsv"))?;
        self.grammar.save(&dir.join("grammar.tsv"))?;
        let bias = dir.join("bias.txt");
        fs::write(&bias, self.bias.to_text()).map_err(|e| Error::io(&bias, e))?;
        let spec = dir.join("fixture.toml");
        let echo = format!("# seed = {}\n{}", self.seed, self.spec.to_toml());
        fs::write(&spec, echo).map_err(|e| Error::io(&spec, e))?;
        let conf = dir.join("pipeline.conf");
        let config = RunConfig {
            seed: self.seed,
            ..RunConfig::default()
        };
        fs::write(&conf, config.to_text()).map_err(|e| Error::io(&conf, e))?;
        self.test.write(&dir.join("test"))?;
        self.train.write(&dir.join("train"))
    }
}

/// Generates the fixture set for `spec` and writes it under `out_dir`.
pub fn gen_fixtures(seed: u64, spec: &FixtureSpec, out_dir: &Path) -> Result<FixtureSet> {
    let set = generate(seed, spec)?;
    set.write(out_dir)?;
    Ok(set)
}

/// Generates a fixture set in memory. The same seed and spec always give the
/// same set.
pub fn generate(seed: u64, spec: &FixtureSpec) -> Result<FixtureSet> {
    spec.validate()?;
    let vocab = build_vocab(spec)?;
    if !vocab.is_word_marked() {
        return Err(Error::Config(format!(
            "fixture units must mark word starts with {WORD_MARKER:?}"
        )));
    }
    for s in spec.spellings() {
        for w in words(&s) {
            vocab.segment(&w)?;
        }
    }

    let mut counts = WordCounts::default();
    for entry in &spec.words {
        for w in words(&entry.text) {
            if entry.count > counts.get(&w) {
                counts.set(w, entry.count);
            }
        }
    }
    let mut lexicon = Lexicon::default();
    for (w, _) in counts.iter() {
        lexicon.add(w, vocab.segment(w)?);
    }
    let grammar = UnigramGrammar::from_counts(&counts)?;
    let bias = BiasList::from_lines(spec.bias.iter().chain(&spec.distractors));

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut gen = Generator {
        spec,
        vocab: &vocab,
        sampler: WeightedIndex::new(spec.words.iter().map(|w| w.weight))
            .map_err(|e| Error::Config(format!("word weights: {e}")))?,
    };
    let test = gen.split("test", spec.test_utterances, &mut rng)?;
    let train = gen.split("train", spec.train_utterances, &mut rng)?;

    Ok(FixtureSet {
        seed,
        spec: spec.clone(),
        vocab,
        lexicon,
        counts,
        grammar,
        bias,
        test,
        train,
    })
}

fn build_vocab(spec: &FixtureSpec) -> Result<SubwordVocab> {
    let mut units = vec![BLANK_UNIT.to_owned()];
    match &spec.units {
        Some(explicit) => units.extend(explicit.iter().cloned()),
        None => {
            let chars: BTreeSet<char> = spec
                .spellings()
                .iter()
                .flat_map(|s| s.chars())
                .filter(|c| *c != ' ')
                .collect();
            units.push(WORD_MARKER.to_string());
            for c in chars {
                units.push(format!("{WORD_MARKER}{c}"));
                units.push(c.to_string());
            }
        }
    }
    SubwordVocab::new(units)
}

/// One token position: the recognized token (`None` = blank) and the
/// runner-up (`None` = blank).
struct Column {
    top: Option<TokenId>,
    second: Option<TokenId>,
    p_second: f64,
}

struct Generator<'a> {
    spec: &'a FixtureSpec,
    vocab: &'a SubwordVocab,
    sampler: WeightedIndex<f64>,
}

impl Generator<'_> {
    fn split(&mut self, prefix: &str, n: usize, rng: &mut ChaCha8Rng) -> Result<FixtureSplit> {
        let mut split = FixtureSplit::default();
        for u in 0..n {
            let id = format!("{prefix}-{u:04}");
            let (matrix, reference, scripted) = self.utterance(rng)?;
            debug_assert_eq!(
                self.vocab.detokenize(&greedy_decode(&matrix)),
                scripted,
                "greedy decode of {id} differs from its script"
            );
            split.posteriors.insert(id.clone(), matrix);
            split.references.insert(id.clone(), reference);
            split.scripted.insert(id, scripted);
        }
        Ok(split)
    }

    fn utterance(&mut self, rng: &mut ChaCha8Rng) -> Result<(PosteriorMatrix, String, String)> {
        let [lo, hi] = self.spec.words_per_utterance;
        let k = rng.gen_range(lo..=hi);
        let (mut reference, mut scripted, mut columns) = (Vec::new(), Vec::new(), Vec::new());
        for _ in 0..k {
            let entry = &self.spec.words[self.sampler.sample(rng)];
            let corrupted = rng.gen::<f64>() < entry.rate;
            let p_second = rng.gen_range(self.spec.second_prob[0]..=self.spec.second_prob[1]);

            let clean = words(&entry.text);
            let (top, second) = if corrupted {
                (words(entry.confuse.as_deref().unwrap_or_default()), Some(clean.clone()))
            } else {
                (clean.clone(), entry.shadow.as_deref().map(words))
            };
            let top_tokens = self.tokens(&top)?;
            let second_tokens = match &second {
                Some(s) => self.tokens(s)?,
                None => top_tokens.clone(),
            };
            for op in edit_path(&top_tokens, &second_tokens) {
                let t = op.hyp_word.map(|j| top_tokens[j]);
                let s = op.ref_word.map(|i| second_tokens[i]);
                columns.push(Column {
                    top: t,
                    second: if op.kind == EditKind::Match { None } else { s },
                    p_second,
                });
            }
            reference.extend(clean);
            scripted.extend(top);
        }
        let matrix = self.render(&columns)?;
        Ok((matrix, reference.join(" "), scripted.join(" ")))
    }

    fn tokens(&self, ws: &[String]) -> Result<Vec<TokenId>> {
        let mut out = Vec::new();
        for w in ws {
            out.extend(self.vocab.segment(w)?);
        }
        Ok(out)
    }

    fn render(&self, columns: &[Column]) -> Result<PosteriorMatrix> {
        let v = self.vocab.len();
        let noise = self.spec.noise;
        let floor = noise / v as f64;
        let scale = 1.0 - noise;
        let blank_frame = {
            let mut row = vec![floor; v];
            row[BLANK as usize] += scale;
            row
        };
        let mut rows = vec![blank_frame.clone()];
        for col in columns {
            let mut row = vec![floor; v];
            let top = col.top.unwrap_or(BLANK) as usize;
            let blank = BLANK as usize;
            row[blank] += scale * self.spec.blank_prob;
            match col.second.map(|s| s as usize) {
                Some(s) if s != top => {
                    row[s] += scale * col.p_second;
                    row[top] += scale * (1.0 - self.spec.blank_prob - col.p_second);
                }
                _ => row[top] += scale * (1.0 - self.spec.blank_prob),
            }
            for _ in 1..self.spec.frames_per_token {
                rows.push(row.clone());
            }
            rows.push(blank_frame.clone());
        }
        PosteriorMatrix::from_probs(&rows)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny(rate: f64) -> FixtureSpec {
        FixtureSpec::parse(&format!(
            r#"
test_utterances = 6
train_utterances = 4
words_per_utterance = [2, 4]
frames_per_token = 2
second_prob = [0.1, 0.4]
bias = ["Gayle"]

[[word]]
text = "THE"
count = 500

[[word]]
text = "WAS"
count = 200
shadow = "WAZE"

[[word]]
text = "GAYLE"
count = 3
confuse = "GAIL"
rate = {rate}
"#
        ))
        .unwrap()
    }

    #[test]
    fn greedy_decode_follows_the_script() {
        let set = generate(3, &tiny(0.5)).unwrap();
        for split in [&set.test, &set.train] {
            for (id, m) in &split.posteriors {
                assert_eq!(set.vocab.detokenize(&greedy_decode(m)), split.scripted[id]);
            }
        }
        assert!(set.test.scripted.values().any(|s| s.contains("GAIL")));
    }

    #[test]
    fn no_corruption_means_script_equals_reference() {
        let set = generate(9, &tiny(0.0)).unwrap();
        assert_eq!(set.test.references, set.test.scripted);
        assert_eq!(set.train.references, set.train.scripted);
    }

    #[test]
    fn same_seed_same_matrices() {
        let a = generate(5, &tiny(0.5)).unwrap();
        let b = generate(5, &tiny(0.5)).unwrap();
        let c = generate(6, &tiny(0.5)).unwrap();
        assert_eq!(a.test, b.test);
        assert_ne!(a.test, c.test);
    }

    #[test]
    fn counts_skip_unseen_words() {
        let mut spec = tiny(0.5);
        spec.words[2].count = 0;
        let set = generate(1, &spec).unwrap();
        assert_eq!(set.counts.get("GAYLE"), 0);
        assert!(!set.lexicon.contains("GAYLE"));
        assert!(set.grammar.contains("THE"));
    }

    #[test]
    fn untokenizable_word_is_rejected() {
        let mut spec = tiny(0.5);
        spec.units = Some(
            ["\u{2581}", "\u{2581}T", "H", "E", "\u{2581}W", "A", "S", "\u{2581}G", "Y", "L", "I"]
                .map(String::from)
                .to_vec(),
        );
        assert!(matches!(generate(1, &spec), Err(Error::UnsegmentableWord { word }) if word == "WAZE"));
        spec.units.as_mut().unwrap().push("Z".into());
        assert!(generate(1, &spec).is_ok());
    }

    #[test]
    fn spec_validation() {
        let mut spec = tiny(0.5);
        spec.words[2].confuse = None;
        assert!(spec.validate().is_err());
        let mut spec = tiny(0.5);
        spec.second_prob = [0.1, 0.48];
        assert!(spec.validate().is_err());
        assert!(FixtureSpec::parse("test_utterances = 1\nbogus = 2").is_err());
    }

    #[test]
    fn shipped_spec_round_trips() {
        let spec = FixtureSpec::default_spec();
        assert_eq!(FixtureSpec::parse(&spec.to_toml()).unwrap(), spec);
    }
}
