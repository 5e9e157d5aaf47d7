#![allow(dead_code)]

pub mod sf_oracle;

use std::sync::OnceLock;

use distcma::dataset::{generate_pairs, MatchedSet, NliPair};
use distcma::lexicon::{words, Distributivity, Lexicon};
use distcma::model::{LabelDistribution, ToyModel};
use proptest::prelude::*;

pub fn dataset(seed: u64) -> Vec<MatchedSet> {
    generate_pairs(&Lexicon::seed(), seed, 164).unwrap()
}

/// Full-size dataset (164 sets) with seed 0, built once per test binary.
pub fn shared_dataset() -> &'static [MatchedSet] {
    static SETS: OnceLock<Vec<MatchedSet>> = OnceLock::new();
    SETS.get_or_init(|| dataset(0))
}

pub fn all_pairs(sets: &[MatchedSet]) -> Vec<&NliPair> {
    sets.iter()
        .flat_map(|s| std::iter::once(&s.control).chain(s.interventions.iter()))
        .collect()
}

/// Independent closed form of the toy model: token count from the template
/// layout and softmax over (b_e, b_n + beta*c, b_c + beta*c).
pub fn toy_closed_form(toy: &ToyModel, pair: &NliPair) -> LabelDistribution {
    let o = toy.oracle();
    let subject_words = |text: &str| words(text).count() as f64;
    // [CLS] dp1 and dp2 PRED . [SEP] subject PRED . [SEP]
    let len = 1.0
        + subject_words(&pair.dp1.text)
        + 1.0
        + subject_words(&pair.dp2.text)
        + 3.0
        + subject_words(&pair.subject().text)
        + 3.0;
    let n_amb = if pair.predicate.distributivity == Distributivity::Ambiguous {
        2.0
    } else {
        0.0
    };
    let c = (o.gain * n_amb / len).tanh();
    let logits = [
        o.bias_entailment,
        o.bias_neutral + o.beta * c,
        o.bias_contradiction + o.beta * c,
    ];
    let m = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let e: Vec<f64> = logits.iter().map(|z| (z - m).exp()).collect();
    let s: f64 = e.iter().sum();
    LabelDistribution {
        p_entailment: e[0] / s,
        p_neutral: e[1] / s,
        p_contradiction: e[2] / s,
    }
}

pub fn close(a: &LabelDistribution, b: &LabelDistribution, tol: f64) -> bool {
    (a.p_entailment - b.p_entailment).abs() < tol
        && (a.p_neutral - b.p_neutral).abs() < tol
        && (a.p_contradiction - b.p_contradiction).abs() < tol
}

/// Strictly interior distributions, well away from the odds floor.
pub fn distribution() -> impl Strategy<Value = LabelDistribution> {
    (1e-6f64..1.0, 1e-6f64..1.0, 1e-6f64..1.0).prop_map(|(a, b, c)| {
        let s = a + b + c;
        LabelDistribution::new(a / s, b / s, c / s).unwrap()
    })
}
