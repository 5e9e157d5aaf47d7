//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! non-zero when a gating criterion fails.

use std::collections::{BTreeMap, BTreeSet};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::process::{Command, ExitCode};

use distcma::analysis::{group_accuracy, layer_depth, neuron_sweep, DepthGroup, SweepOptions};
use distcma::dataset::{
    blocked_sentences, count_matched_pairs, dataset_to_jsonl, generate_pairs, MatchedSet, PairLabel,
};
use distcma::effects::{
    mean_effects, natural_indirect_effect, odds_non_entailment, te_from_odds, te_records,
};
use distcma::lexicon::{Distributivity, Lexicon};
use distcma::model::{
    construct_toy_model, save_checkpoint, ActivationCoord, Alignment, ConstantModel,
    LabelDistribution, MediatorSpec, NliClass, NliModel, OverlapBaseline, ToyModel, CACHE_ENV_VAR,
};
use distcma::stats::{one_sample_t_allow_constant, one_sample_t_from_summary, StudentT};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

mod common;
use common::sf_oracle::SF_ORACLE;

/// Environment variable naming the external checkpoint for criterion 10.
const MODEL_ENV_VAR: &str = "DISTCMA_MODEL";

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome {
        pass,
        detail: detail.into(),
    }
}

fn full_scale() -> Vec<MatchedSet> {
    generate_pairs(&Lexicon::seed(), 0, 164).unwrap()
}

fn criterion_1() -> Outcome {
    let sets = full_scale();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let trials = 1000;
    let mut worst = 0.0f64;
    let mut failures = 0;
    for _ in 0..trials {
        let toy = construct_toy_model(rng.random());
        let meta = toy.meta().clone();
        let set = &sets[rng.random_range(0..sets.len())];
        let size = rng.random_range(1..=6);
        let coords: BTreeSet<ActivationCoord> = (0..size)
            .map(|_| {
                ActivationCoord::new(
                    rng.random_range(0..meta.n_layers),
                    rng.random_range(0..meta.hidden_size),
                )
            })
            .collect();
        let spec = MediatorSpec::new(coords.into_iter().collect()).unwrap();
        let (c, i) = set.pairs().next().unwrap();
        let r = natural_indirect_effect(&toy, &set.match_id, c, i, &spec, Alignment::MinLength)
            .unwrap();
        let gap = (r.te - r.nie.unwrap() - r.nde.unwrap()).abs();
        worst = worst.max(gap);
        if !(gap < 1e-9) {
            failures += 1;
        }
    }
    outcome(
        failures == 0,
        format!("{trials} random toy pair/mediator trials, max |te - nie - nde| = {worst:.2e}, {failures} above 1e-9"),
    )
}

/// (model, mean, sd, printed T, printed upper bound on p); n = 164.
const PUBLISHED_T_TESTS: [(&str, f64, f64, f64, Option<f64>); 6] = [
    ("D-b", 0.040, 1.091, 0.468, None),
    ("D-l", 0.314, 0.900, 4.452, Some(7e-6)),
    ("D-xl", 0.351, 0.507, 8.844, Some(7e-16)),
    ("D-v2-xl", 0.856, 0.796, 13.724, Some(2e-29)),
    ("D-v2-xxl", 0.828, 1.088, 9.724, Some(3e-18)),
    ("R-l", 0.779, 1.279, 7.774, Some(4e-13)),
];

fn criterion_2() -> Outcome {
    let mut max_dt = 0.0f64;
    let mut t_misses = Vec::new();
    let mut p_misses = Vec::new();
    for (name, mean, sd, printed_t, bound) in PUBLISHED_T_TESTS {
        let r = one_sample_t_from_summary(mean, sd, 164, 0.05).unwrap();
        let dt = (r.t_statistic - printed_t).abs();
        max_dt = max_dt.max(dt);
        if dt > 0.06 {
            t_misses.push(format!("{name} t={:.3}", r.t_statistic));
        }
        if let Some(b) = bound {
            if !(r.p_value_one_sided < b) {
                p_misses.push(format!("{name} p={:.3e} not < {b:e}", r.p_value_one_sided));
            }
        }
    }
    let t_part = if t_misses.is_empty() {
        format!("t within 0.06 on 6/6 rows (max |dt| {max_dt:.3})")
    } else {
        format!("t outside 0.06: {}", t_misses.join(", "))
    };
    let p_part = if p_misses.is_empty() {
        "every printed p bound respected".to_string()
    } else {
        format!("p bound violated: {}", p_misses.join("; "))
    };
    outcome(
        t_misses.is_empty() && p_misses.is_empty(),
        format!("{t_part}; {p_part}"),
    )
}

fn criterion_3() -> Outcome {
    let sets = full_scale();
    let toy = construct_toy_model(0);
    let o = toy.oracle().clone();
    let mut worst_nie = 0.0f64;
    let mut worst_nde = 0.0f64;
    let mut dead_nonzero = 0;
    for set in &sets {
        for (c, i) in set.pairs() {
            let planted = natural_indirect_effect(
                &toy,
                &set.match_id,
                c,
                i,
                &MediatorSpec::single(o.planted),
                Alignment::MinLength,
            )
            .unwrap();
            worst_nie = worst_nie.max((planted.nie.unwrap() - planted.te).abs());
            worst_nde = worst_nde.max(planted.nde.unwrap().abs());
            let dead = natural_indirect_effect(
                &toy,
                &set.match_id,
                c,
                i,
                &MediatorSpec::single(o.dead),
                Alignment::MinLength,
            )
            .unwrap();
            if dead.nie.unwrap() != 0.0 {
                dead_nonzero += 1;
            }
        }
    }
    let table = neuron_sweep(&toy, &sets, &SweepOptions::default()).unwrap();
    let top = table.ranked_by_magnitude()[0].coord;
    let pass = worst_nie < 1e-9 && worst_nde < 1e-9 && dead_nonzero == 0 && top == o.planted;
    outcome(
        pass,
        format!(
            "{} pairs: max |NIE - TE| {worst_nie:.1e}, max |NDE| {worst_nde:.1e}, dead NIE nonzero on {dead_nonzero}, sweep top {top} (planted {})",
            count_matched_pairs(&sets),
            o.planted
        ),
    )
}

fn criterion_4() -> Outcome {
    let sets = full_scale();
    let model = OverlapBaseline::new();
    let records = te_records(&model, &sets, 1).unwrap();
    let nonzero = records.iter().filter(|r| r.te != 0.0).count();
    let mean = mean_effects(&records).unwrap().te.mean;
    let te: Vec<f64> = records.iter().map(|r| r.te).collect();
    let t = one_sample_t_allow_constant(&te, 0.05).unwrap();
    outcome(
        nonzero == 0 && mean == 0.0 && !t.reject_h0,
        format!(
            "{} pairs, te != 0 on {nonzero}, mean TE {mean}, p {} so H0 {}",
            records.len(),
            t.p_value_one_sided,
            if t.reject_h0 { "rejected" } else { "kept" }
        ),
    )
}

fn random_distribution(rng: &mut ChaCha8Rng) -> LabelDistribution {
    let w: [f64; 3] = [
        rng.random_range(1e-6..1.0),
        rng.random_range(1e-6..1.0),
        rng.random_range(1e-6..1.0),
    ];
    let s: f64 = w.iter().sum();
    LabelDistribution::new(w[0] / s, w[1] / s, w[2] / s).unwrap()
}

fn criterion_5() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut counts = [0usize; 3];
    let mut wrong = 0;
    for _ in 0..1000 {
        let a = random_distribution(&mut rng);
        let b = random_distribution(&mut rng);
        let (ya, yb) = (odds_non_entailment(&a), odds_non_entailment(&b));
        // Both orders, plus the equal case.
        for (y_null, y_swap) in [(ya, yb), (yb, ya), (ya, ya)] {
            let te = te_from_odds(&y_null, &y_swap);
            let (ok, slot) = if y_swap.value > y_null.value {
                (te > 0.0, 0)
            } else if y_swap.value == y_null.value {
                (te == 0.0, 1)
            } else {
                (te < 0.0, 2)
            };
            counts[slot] += 1;
            if !ok {
                wrong += 1;
            }
        }
    }
    outcome(
        wrong == 0 && counts.iter().all(|&c| c > 0),
        format!(
            "1000 random distribution pairs: {} greater, {} equal, {} less, {wrong} sign errors",
            counts[0], counts[1], counts[2]
        ),
    )
}

fn criterion_6() -> Outcome {
    let d35 = layer_depth(35, 48);
    let d13 = layer_depth(13, 24);
    let mut partition_ok = true;
    for n in [12, 24, 48] {
        let mut groups: BTreeMap<DepthGroup, usize> = BTreeMap::new();
        for layer in 0..n {
            *groups
                .entry(DepthGroup::of(layer_depth(layer, n)))
                .or_default() += 1;
        }
        partition_ok &= groups.values().sum::<usize>() == n && groups.len() == 3;
    }
    let pass = (d35 - 0.729).abs() < 5e-4
        && format!("{d35:.2}") == "0.73"
        && DepthGroup::of(d35) == DepthGroup::Final
        && (d13 - 0.542).abs() < 5e-4
        && DepthGroup::of(d13) == DepthGroup::Middle
        && partition_ok;
    outcome(
        pass,
        format!(
            "35/48 -> {d35:.3} {}, 13/24 -> {d13:.3} {}, 12/24/48-layer partitions {}",
            DepthGroup::of(d35),
            DepthGroup::of(d13),
            if partition_ok { "complete" } else { "broken" }
        ),
    )
}

fn criterion_7() -> Outcome {
    let lex = Lexicon::seed();
    let sets = full_scale();
    let n_control = sets.len();
    let n_intervention = count_matched_pairs(&sets);
    let mut labelled = 0;
    let mut total = 0;
    for set in &sets {
        for p in std::iter::once(&set.control).chain(&set.interventions) {
            total += 1;
            let entails = p.label == PairLabel::Entailment;
            if entails == (p.predicate.distributivity == Distributivity::Distributive) {
                labelled += 1;
            }
        }
    }
    let blocked = blocked_sentences(&sets, &lex).len();
    let a = dataset_to_jsonl(&sets).unwrap();
    let b = dataset_to_jsonl(&full_scale()).unwrap();
    let pass = n_control == 164
        && n_intervention == n_control
        && labelled == total
        && blocked == 0
        && a == b;
    outcome(
        pass,
        format!(
            "groups {n_control}/{n_intervention}, label rule {labelled}/{total}, {blocked} blocked tokens, reruns {}",
            if a == b { "byte-identical" } else { "differ" }
        ),
    )
}

fn criterion_8() -> Outcome {
    let acc = group_accuracy(&ConstantModel::always(NliClass::Entailment), &full_scale()).unwrap();
    let (c, i) = acc.formatted();
    outcome(
        c == "100.00" && i == "0.00",
        format!("constant-entailment stub scores ({c}, {i})"),
    )
}

fn criterion_9() -> Outcome {
    let halves: Vec<f64> = [1.0, 5.0, 163.0]
        .iter()
        .map(|&df| StudentT::new(df).unwrap().sf(0.0))
        .collect();
    let mut worst = 0.0f64;
    for (df, t, want) in SF_ORACLE {
        let got = StudentT::new(df).unwrap().sf(t);
        worst = worst.max(((got - want) / want).abs());
    }
    outcome(
        halves.iter().all(|&p| p == 0.5) && worst < 1e-8,
        format!(
            "p(t=0) = {halves:?} for df 1/5/163, max relative error {worst:.1e} over {} oracle points",
            SF_ORACLE.len()
        ),
    )
}

/// Runs `te` through the binary against an external checkpoint. Without
/// one configured, an exported toy checkpoint stands in.
fn criterion_10() -> Outcome {
    let work = tempfile::tempdir().unwrap();
    let (model, cache, source) = match std::env::var(MODEL_ENV_VAR) {
        Ok(name) => (
            name,
            std::env::var_os(CACHE_ENV_VAR),
            "configured checkpoint",
        ),
        Err(_) => {
            let cache = work.path().join("cache");
            let toy = ToyModel::new(&Lexicon::seed(), 0);
            save_checkpoint(&toy.into_network(), &cache.join("exported-toy")).unwrap();
            (
                "exported-toy".to_string(),
                Some(cache.into_os_string()),
                "no checkpoint configured, stand-in",
            )
        }
    };
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_distcma"));
    cmd.args(["te", "--model", &model, "--out"])
        .arg(work.path().join("out"));
    match &cache {
        Some(c) => cmd.env(CACHE_ENV_VAR, c),
        None => cmd.env_remove(CACHE_ENV_VAR),
    };
    let out = cmd.output().unwrap();
    if !out.status.success() {
        return outcome(
            false,
            format!(
                "{source}: te failed: {}",
                String::from_utf8_lossy(&out.stderr).trim()
            ),
        );
    }
    let mut rows = csv::Reader::from_path(work.path().join("out/te_table.csv")).unwrap();
    let headers = rows.headers().unwrap().clone();
    let col = |name: &str| headers.iter().position(|h| h == name).unwrap();
    let (te_col, flag_col) = (col("te"), col("clamp_flags"));
    let mut n = 0;
    let mut sum = 0.0;
    let mut unflagged = 0;
    for row in rows.records() {
        let row = row.unwrap();
        let te: f64 = row[te_col].parse().unwrap();
        if !te.is_finite() && row[flag_col].is_empty() {
            unflagged += 1;
        }
        sum += te;
        n += 1;
    }
    let mean = sum / n as f64;
    outcome(
        mean.is_finite() && mean != 0.0 && unflagged == 0,
        format!("{source} {model}: {n} pairs, mean TE {mean:.4}, {unflagged} unflagged infinities"),
    )
}

fn main() -> ExitCode {
    let criteria: [(u32, bool, fn() -> Outcome); 10] = [
        (1, true, criterion_1),
        (2, true, criterion_2),
        (3, true, criterion_3),
        (4, true, criterion_4),
        (5, true, criterion_5),
        (6, true, criterion_6),
        (7, true, criterion_7),
        (8, true, criterion_8),
        (9, true, criterion_9),
        (10, false, criterion_10),
    ];
    let mut gating_failures = 0;
    for (id, gating, run) in criteria {
        let result = catch_unwind(AssertUnwindSafe(run)).unwrap_or_else(|e| {
            let msg = e
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_default();
            outcome(false, format!("panicked: {msg}"))
        });
        let status = if result.pass { "PASS" } else { "FAIL" };
        let note = if gating { "" } else { " (optional)" };
        println!("{status} criterion {id}{note}: {}", result.detail);
        if gating && !result.pass {
            gating_failures += 1;
        }
    }
    if gating_failures == 0 {
        ExitCode::SUCCESS
    } else {
        println!("{gating_failures} gating criterion failed");
        ExitCode::FAILURE
    }
}
