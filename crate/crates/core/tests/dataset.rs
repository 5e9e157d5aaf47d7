use std::collections::BTreeMap;

use distcma::dataset::{
    blocked_sentences, count_matched_pairs, dataset_to_jsonl, generate_pairs, parse_dataset,
    read_dataset, swap_pred, write_dataset, PairLabel,
};
use distcma::lexicon::{find_blocked_token, Distributivity, Lexicon};
use distcma::Error;
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

#[test]
fn full_scale_groups_are_balanced() {
    let sets = generate_pairs(&Lexicon::seed(), 0, 164).unwrap();
    assert_eq!(sets.len(), 164);
    assert_eq!(count_matched_pairs(&sets), 164);
    let jsonl = dataset_to_jsonl(&sets).unwrap();
    assert_eq!(jsonl.lines().count(), 328);
}

#[test]
fn label_rule_holds_everywhere() {
    for seed in 0..5 {
        for set in generate_pairs(&Lexicon::seed(), seed, 164).unwrap() {
            assert_eq!(
                set.control.predicate.distributivity,
                Distributivity::Distributive
            );
            assert_eq!(set.control.label, PairLabel::Entailment);
            for i in &set.interventions {
                assert_eq!(i.predicate.distributivity, Distributivity::Ambiguous);
                assert_eq!(i.label, PairLabel::NonEntailment);
            }
        }
    }
}

#[test]
fn no_quantifier_tokens() {
    let lex = Lexicon::seed();
    let sets = generate_pairs(&lex, 0, 164).unwrap();
    assert!(blocked_sentences(&sets, &lex).is_empty());
    for set in &sets {
        for p in std::iter::once(&set.control).chain(&set.interventions) {
            for text in [&p.premise, &p.hypothesis] {
                assert_eq!(
                    find_blocked_token(text, &lex.quantifier_blocklist),
                    None,
                    "{text}"
                );
            }
        }
    }
}

#[test]
fn seeded_generation_is_byte_identical() {
    let lex = Lexicon::seed();
    let a = dataset_to_jsonl(&generate_pairs(&lex, 42, 164).unwrap()).unwrap();
    let b = dataset_to_jsonl(&generate_pairs(&lex, 42, 164).unwrap()).unwrap();
    assert_eq!(a, b);
    let c = dataset_to_jsonl(&generate_pairs(&lex, 43, 164).unwrap()).unwrap();
    assert_ne!(a, c);
}

#[test]
fn file_round_trip() {
    let sets = generate_pairs(&Lexicon::seed(), 5, 50).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("d.jsonl");
    write_dataset(&sets, &path).unwrap();
    assert_eq!(read_dataset(&path).unwrap(), sets);
    let text = std::fs::read_to_string(&path).unwrap();
    assert_eq!(parse_dataset(text.as_bytes()).unwrap(), sets);
}

#[test]
fn missing_ambiguous_predicates_is_a_typed_error() {
    let toml = r#"
        [[determiner_phrases]]
        text = "Mia"
        category = "person"

        [[determiner_phrases]]
        text = "Lin"
        category = "person"

        [[predicates]]
        text = "laughed"
        type = "distributive"
    "#;
    let err = Lexicon::from_toml_str(toml).unwrap_err();
    assert!(matches!(
        err,
        Error::MissingPredicateType(Distributivity::Ambiguous)
    ));
    assert!(err.to_string().contains("missing predicate type"));
}

/// Pearson chi-square and a per-bin 4-sigma bound over 10,000 swaps.
#[test]
fn swap_pred_is_uniform_over_eligible_predicates() {
    let lex = Lexicon::seed();
    let sets = generate_pairs(&lex, 0, 10).unwrap();
    let control = &sets[0].control;
    let eligible: Vec<&str> = lex
        .predicates_of(Distributivity::Ambiguous)
        .filter(|p| p.accepts(control.dp1.category) && p.accepts(control.dp2.category))
        .map(|p| p.predicate.text.as_str())
        .collect();
    let k = eligible.len();
    assert!(k >= 5, "need several eligible predicates, got {k}");

    let draws = 10_000;
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let mut counts: BTreeMap<String, usize> = BTreeMap::new();
    for _ in 0..draws {
        let swapped = swap_pred(control, &lex, &mut rng).unwrap();
        *counts.entry(swapped.predicate.text).or_default() += 1;
    }
    assert_eq!(counts.len(), k, "every eligible predicate should be drawn");
    for key in counts.keys() {
        assert!(eligible.contains(&key.as_str()), "{key} is not eligible");
    }

    let expected = draws as f64 / k as f64;
    let chi2: f64 = counts
        .values()
        .map(|&c| (c as f64 - expected).powi(2) / expected)
        .sum();
    // 99.9th percentile of chi-square with df - 1 degrees of freedom, via
    // the Wilson-Hilferty approximation.
    let df = (k - 1) as f64;
    let z = 3.090_232;
    let critical = df * (1.0 - 2.0 / (9.0 * df) + z * (2.0 / (9.0 * df)).sqrt()).powi(3);
    assert!(chi2 < critical, "chi2 {chi2} >= {critical}");

    let p = 1.0 / k as f64;
    let sigma = (draws as f64 * p * (1.0 - p)).sqrt();
    for (key, &c) in &counts {
        assert!(
            (c as f64 - expected).abs() < 4.0 * sigma,
            "{key}: {c} vs {expected}"
        );
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn generated_sets_are_minimal_pairs(seed in any::<u64>(), max in 1usize..80) {
        let sets = generate_pairs(&Lexicon::seed(), seed, max).unwrap();
        prop_assert!(sets.len() <= max);
        prop_assert!(!sets.is_empty());
        for set in &sets {
            set.validate().unwrap();
            for (c, i) in set.pairs() {
                prop_assert_eq!(&c.dp1, &i.dp1);
                prop_assert_eq!(&c.dp2, &i.dp2);
                prop_assert_eq!(c.hypothesis_subject, i.hypothesis_subject);
                prop_assert_ne!(&c.predicate.text, &i.predicate.text);
                prop_assert_eq!(c.dp1.category, c.dp2.category);
            }
        }
    }

    #[test]
    fn swap_pred_flips_type_and_keeps_subjects(seed in any::<u64>(), idx in 0usize..164) {
        let lex = Lexicon::seed();
        let sets = generate_pairs(&lex, 0, 164).unwrap();
        let pair = &sets[idx % sets.len()].control;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let swapped = swap_pred(pair, &lex, &mut rng).unwrap();
        prop_assert_eq!(swapped.predicate.distributivity, Distributivity::Ambiguous);
        prop_assert_eq!(&swapped.dp1, &pair.dp1);
        prop_assert_eq!(&swapped.dp2, &pair.dp2);
        let back = swap_pred(&swapped, &lex, &mut rng).unwrap();
        prop_assert_eq!(back.predicate.distributivity, Distributivity::Distributive);
    }
}
