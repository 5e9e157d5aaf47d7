use distcma::effects::{natural_indirect_effect, odds_non_entailment, total_effect};
use distcma::lexicon::Distributivity;
use distcma::model::{
    construct_toy_model, ActivationCoord, ActivationSnapshot, Alignment, MediatorSpec, NliModel,
    OverlapBaseline,
};
use proptest::prelude::*;

mod common;
use common::{all_pairs, close, dataset, toy_closed_form};

#[test]
fn toy_predictions_match_closed_form() {
    let toy = construct_toy_model(0);
    for pair in all_pairs(&dataset(0)) {
        let got = toy.predict(pair).unwrap();
        let want = toy_closed_form(&toy, pair);
        assert!(
            close(&got, &want, 1e-12),
            "{}: {got:?} vs {want:?}",
            pair.pair_id
        );
    }
}

#[test]
fn toy_planted_value_matches_analytic_feature() {
    let toy = construct_toy_model(1);
    let planted = toy.oracle().planted;
    let spec = MediatorSpec::single(planted);
    for pair in all_pairs(&dataset(1)).into_iter().take(40) {
        let (_, snap) = toy.predict_with_capture(pair, &spec).unwrap();
        assert_eq!(snap.seq_len, toy.seq_len(pair).unwrap());
        let len = snap.seq_len as f64;
        let n_amb = if pair.predicate.distributivity == Distributivity::Ambiguous {
            2.0
        } else {
            0.0
        };
        let want = (toy.oracle().gain * n_amb / len).tanh();
        for v in snap.get(planted).unwrap() {
            assert!((v - want).abs() < 1e-12);
        }
    }
}

#[test]
fn toy_patch_at_planted_reproduces_null() {
    let toy = construct_toy_model(2);
    let spec = MediatorSpec::single(toy.oracle().planted);
    for set in dataset(2).iter().take(30) {
        for (c, i) in set.pairs() {
            let (null, snap) = toy.predict_with_capture(c, &spec).unwrap();
            let patched = toy
                .predict_with_patch(i, &snap, Alignment::MinLength)
                .unwrap();
            assert!(close(&patched, &null, 1e-12));
        }
    }
}

#[test]
fn toy_dead_coordinate_is_inert() {
    let toy = construct_toy_model(3);
    let dead = toy.oracle().dead;
    for pair in all_pairs(&dataset(3)).into_iter().take(30) {
        let n = toy.seq_len(pair).unwrap();
        let zeros = ActivationSnapshot {
            coords: vec![dead],
            values: vec![vec![0.0; n]],
            seq_len: n,
        };
        let patched = toy
            .predict_with_patch(pair, &zeros, Alignment::Strict)
            .unwrap();
        assert_eq!(patched, toy.predict(pair).unwrap());
    }
}

#[test]
fn toy_mediation_completeness() {
    let toy = construct_toy_model(4);
    let o = toy.oracle().clone();
    for set in dataset(4) {
        for (c, i) in set.pairs() {
            let te = total_effect(&toy, &set.match_id, c, i).unwrap().te;
            let planted = natural_indirect_effect(
                &toy,
                &set.match_id,
                c,
                i,
                &MediatorSpec::single(o.planted),
                Alignment::MinLength,
            )
            .unwrap();
            assert!((planted.nie.unwrap() - te).abs() < 1e-9);
            assert!(planted.nde.unwrap().abs() < 1e-9);
            let dead = natural_indirect_effect(
                &toy,
                &set.match_id,
                c,
                i,
                &MediatorSpec::single(o.dead),
                Alignment::MinLength,
            )
            .unwrap();
            assert_eq!(dead.nie.unwrap(), 0.0);
            assert_eq!(dead.nde.unwrap(), dead.te);
        }
    }
}

#[test]
fn toy_te_is_positive_and_matches_closed_form() {
    let toy = construct_toy_model(5);
    for set in dataset(5) {
        for (c, i) in set.pairs() {
            let r = total_effect(&toy, &set.match_id, c, i).unwrap();
            let want = odds_non_entailment(&toy_closed_form(&toy, i)).ln()
                - odds_non_entailment(&toy_closed_form(&toy, c)).ln();
            assert!((r.te - want).abs() < 1e-9);
            assert!(r.te > 0.0);
        }
    }
}

#[test]
fn overlap_baseline_te_is_exactly_zero() {
    let m = OverlapBaseline::new();
    for set in dataset(6) {
        for (c, i) in set.pairs() {
            assert_eq!(total_effect(&m, &set.match_id, c, i).unwrap().te, 0.0);
        }
    }
}

#[test]
fn overlap_depends_only_on_overlap() {
    let m = OverlapBaseline::new();
    let sets = dataset(7);
    let p = &sets[0].control;
    let mut same = p.clone();
    same.hypothesis = p.premise.clone();
    // Every hypothesis word occurs in the premise, as for the generated pairs.
    assert_eq!(m.predict(&same).unwrap(), m.predict(p).unwrap());
}

#[test]
fn strict_alignment_rejects_length_mismatch() {
    let toy = construct_toy_model(0);
    let sets = dataset(0);
    let a = &sets[0].control;
    let n = toy.seq_len(a).unwrap();
    let snap = ActivationSnapshot {
        coords: vec![ActivationCoord::new(0, 0)],
        values: vec![vec![0.0; n + 1]],
        seq_len: n + 1,
    };
    assert!(toy.predict_with_patch(a, &snap, Alignment::Strict).is_err());
    assert!(toy
        .predict_with_patch(a, &snap, Alignment::MinLength)
        .is_ok());
    let oob = MediatorSpec::single(ActivationCoord::new(9, 0));
    assert!(toy.predict_with_capture(a, &oob).is_err());
}

#[test]
fn capability_manifest_fields() {
    let toy = construct_toy_model(0);
    let json = serde_json::to_value(toy.meta().capabilities()).unwrap();
    for key in [
        "name",
        "n_layers",
        "hidden_size",
        "label_order",
        "thread_safe",
    ] {
        assert!(json.get(key).is_some(), "missing {key}");
    }
    assert!(toy.meta().n_layers >= 2 && toy.meta().hidden_size >= 8);
}

fn spec_strategy(n_layers: usize, hidden: usize) -> impl Strategy<Value = MediatorSpec> {
    proptest::collection::btree_set((0..n_layers, 0..hidden), 1..6).prop_map(|set| {
        MediatorSpec::new(
            set.into_iter()
                .map(|(l, n)| ActivationCoord::new(l, n))
                .collect(),
        )
        .unwrap()
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn capture_is_side_effect_free(seed in 0u64..1000, idx in 0usize..300, spec in spec_strategy(3, 8)) {
        let toy = construct_toy_model(seed);
        let sets = dataset(seed % 7);
        let pairs = all_pairs(&sets);
        let pair = pairs[idx % pairs.len()];
        let (d, _) = toy.predict_with_capture(pair, &spec).unwrap();
        prop_assert_eq!(d, toy.predict(pair).unwrap());
    }

    #[test]
    fn self_patch_is_identity(seed in 0u64..1000, idx in 0usize..300, spec in spec_strategy(3, 8)) {
        let toy = construct_toy_model(seed);
        let sets = dataset(seed % 7);
        let pairs = all_pairs(&sets);
        let pair = pairs[idx % pairs.len()];
        let (d, snap) = toy.predict_with_capture(pair, &spec).unwrap();
        let patched = toy.predict_with_patch(pair, &snap, Alignment::Strict).unwrap();
        prop_assert!(close(&patched, &d, 1e-9));
    }
}
