use std::path::Path;

use ctxbias::io::{
    parse_transcripts, Alternates, BiasList, Lexicon, PosteriorMatrix, SubwordVocab, WordCounts,
};
use ctxbias::Error;
use proptest::prelude::*;

fn unit_set() -> impl Strategy<Value = Vec<String>> {
    prop::collection::btree_set("[ABC]{2,3}", 0..6).prop_map(|s| {
        let mut units: Vec<String> = vec!["<blank>".into(), "A".into(), "B".into(), "C".into()];
        units.extend(s);
        units
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(300))]

    #[test]
    fn segmentation_concatenates_back_greedily(units in unit_set(), word in "[ABC]{1,12}") {
        let vocab = SubwordVocab::new(units.clone()).unwrap();
        let ids = vocab.segment(&word).unwrap();
        let pieces: Vec<&str> = ids.iter().map(|&i| vocab.unit(i).unwrap()).collect();
        prop_assert_eq!(pieces.concat(), word.clone());
        let mut rest = word.as_str();
        for p in pieces {
            let longest = units[1..].iter().filter(|u| rest.starts_with(u.as_str())).map(String::len).max().unwrap();
            prop_assert_eq!(p.len(), longest);
            rest = &rest[p.len()..];
        }
    }

    #[test]
    fn posterior_binary_and_text_round_trip(rows in prop::collection::vec(prop::collection::vec(0.01f64..1.0, 3), 1..6)) {
        let m = PosteriorMatrix::from_probs(&rows).unwrap();
        prop_assert_eq!(&PosteriorMatrix::parse_binary(&m.to_binary()).unwrap(), &m);
        let back = PosteriorMatrix::parse_text(&m.to_text()).unwrap();
        prop_assert_eq!(back.as_slice(), m.as_slice());
    }

    #[test]
    fn counts_round_trip(entries in prop::collection::btree_map("[A-Z]{1,6}", 1u64..100_000, 0..10)) {
        let counts: WordCounts = entries.into_iter().collect();
        prop_assert_eq!(WordCounts::parse(&counts.to_text(), Path::new("c")).unwrap(), counts);
    }
}

#[test]
fn unnormalized_frame_is_rejected_with_its_index() {
    let err = PosteriorMatrix::parse_text("2 2\n-0.6931 -0.6931\n-0.1 -0.1\n").unwrap_err();
    assert!(matches!(err, Error::Normalization { frame: 1, .. }), "{err}");
}

#[test]
fn truncated_binary_is_rejected() {
    let m = PosteriorMatrix::from_probs(&[vec![0.5, 0.5]]).unwrap();
    let bytes = m.to_binary();
    assert!(PosteriorMatrix::parse_binary(&bytes[..bytes.len() - 1]).is_err());
}

#[test]
fn lexicon_and_alternates_round_trip() {
    let vocab = SubwordVocab::new(["<blank>", "\u{2581}G", "A", "I", "L", "Y", "E"]).unwrap();
    let mut lex = Lexicon::default();
    lex.add("GAIL", vocab.segment("GAIL").unwrap());
    lex.add("GAYLE", vocab.segment("GAYLE").unwrap());
    assert_eq!(Lexicon::parse(&lex.to_text(), &vocab).unwrap(), lex);

    let mut alts = Alternates::default();
    alts.insert("GAYLE", "GAIL");
    alts.insert("Blac Chyna", "black china");
    alts.insert("GAYLE", "GAYLE");
    assert_eq!(alts.len(), 2);
    assert_eq!(Alternates::parse(&alts.to_text(), Path::new("a")).unwrap(), alts);
}

#[test]
fn bias_list_normalizes_and_dedups() {
    let b = BiasList::parse("Gayle\n\n  gayle \nBlac  Chyna\n# not a comment\n");
    let texts: Vec<String> = b.terms().iter().map(|t| t.text()).collect();
    assert_eq!(texts, ["GAYLE", "BLAC CHYNA", "NOT A COMMENT"]);
}

#[test]
fn nbest_transcripts_keep_rank_one() {
    let t = parse_transcripts("u1\t1\t-3.5\tthe gail\nu1\t2\t-4.0\tthe gale\nu2\thello\n", Path::new("h")).unwrap();
    assert_eq!(t["u1"], "THE GAIL");
    assert_eq!(t["u2"], "HELLO");
}
