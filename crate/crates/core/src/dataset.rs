//! Minimal-pair premise/hypothesis generation, the swap-pred and null input
//! interventions, and the JSONL dataset format.

use std::collections::{BTreeSet, HashMap};
use std::fmt;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lexicon::{
    find_blocked_token, Category, DeterminerPhrase, Distributivity, Lexicon, Predicate,
};

/// Which conjunct of the premise subject is repeated in the hypothesis.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum HypothesisSubject {
    Dp1,
    Dp2,
}

/// Gold label of a pair. Non-entailment admits both neutral and contradiction.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PairLabel {
    Entailment,
    NonEntailment,
}

impl PairLabel {
    pub fn for_predicate(kind: Distributivity) -> Self {
        match kind {
            Distributivity::Distributive => PairLabel::Entailment,
            Distributivity::Ambiguous => PairLabel::NonEntailment,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Group {
    Control,
    Intervention,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct NliPair {
    pub pair_id: String,
    pub premise: String,
    pub hypothesis: String,
    pub dp1: DeterminerPhrase,
    pub dp2: DeterminerPhrase,
    pub hypothesis_subject: HypothesisSubject,
    pub predicate: Predicate,
    pub label: PairLabel,
}

fn sentence(body: String) -> String {
    let mut chars = body.chars();
    match chars.next() {
        Some(first) => first.to_uppercase().chain(chars).chain(['.']).collect(),
        None => body,
    }
}

pub fn render_premise(
    dp1: &DeterminerPhrase,
    dp2: &DeterminerPhrase,
    predicate: &Predicate,
) -> String {
    sentence(format!("{} and {} {}", dp1.text, dp2.text, predicate.text))
}

pub fn render_hypothesis(subject: &DeterminerPhrase, predicate: &Predicate) -> String {
    sentence(format!("{} {}", subject.text, predicate.text))
}

impl NliPair {
    /// Renders the template and assigns the label from the predicate type.
    pub fn new(
        pair_id: impl Into<String>,
        dp1: DeterminerPhrase,
        dp2: DeterminerPhrase,
        hypothesis_subject: HypothesisSubject,
        predicate: Predicate,
    ) -> Self {
        let premise = render_premise(&dp1, &dp2, &predicate);
        let subject = match hypothesis_subject {
            HypothesisSubject::Dp1 => &dp1,
            HypothesisSubject::Dp2 => &dp2,
        };
        let hypothesis = render_hypothesis(subject, &predicate);
        let label = PairLabel::for_predicate(predicate.distributivity);
        Self {
            pair_id: pair_id.into(),
            premise,
            hypothesis,
            dp1,
            dp2,
            hypothesis_subject,
            predicate,
            label,
        }
    }

    pub fn subject(&self) -> &DeterminerPhrase {
        match self.hypothesis_subject {
            HypothesisSubject::Dp1 => &self.dp1,
            HypothesisSubject::Dp2 => &self.dp2,
        }
    }

    /// Same subjects and hypothesis subject, different predicate.
    pub fn with_predicate(&self, predicate: Predicate) -> NliPair {
        NliPair::new(
            self.pair_id.clone(),
            self.dp1.clone(),
            self.dp2.clone(),
            self.hypothesis_subject,
            predicate,
        )
    }

    pub fn validate(&self) -> Result<()> {
        let fail = |message: String| Error::InvalidPair {
            pair_id: self.pair_id.clone(),
            message,
        };
        if self.dp1.text == self.dp2.text {
            return Err(fail(format!("dp1 and dp2 are both {:?}", self.dp1.text)));
        }
        let premise = render_premise(&self.dp1, &self.dp2, &self.predicate);
        if self.premise != premise {
            return Err(fail(format!(
                "premise {:?} does not match template rendering {premise:?}",
                self.premise
            )));
        }
        let hypothesis = render_hypothesis(self.subject(), &self.predicate);
        if self.hypothesis != hypothesis {
            return Err(fail(format!(
                "hypothesis {:?} does not match template rendering {hypothesis:?}",
                self.hypothesis
            )));
        }
        let expected = PairLabel::for_predicate(self.predicate.distributivity);
        if self.label != expected {
            return Err(fail(format!(
                "label {:?} is inconsistent with {} predicate {:?}",
                self.label, self.predicate.distributivity, self.predicate.text
            )));
        }
        Ok(())
    }
}

impl fmt::Display for NliPair {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} / {}", self.premise, self.hypothesis)
    }
}

/// A distributive control pair and its ambiguous swap-pred images.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MatchedSet {
    pub match_id: String,
    pub control: NliPair,
    pub interventions: Vec<NliPair>,
}

impl MatchedSet {
    pub fn new(
        match_id: impl Into<String>,
        control: NliPair,
        interventions: Vec<NliPair>,
    ) -> Result<Self> {
        let set = Self {
            match_id: match_id.into(),
            control,
            interventions,
        };
        set.validate()?;
        Ok(set)
    }

    pub fn validate(&self) -> Result<()> {
        let fail = |message: String| Error::InvalidMatchedSet {
            match_id: self.match_id.clone(),
            message,
        };
        self.control.validate()?;
        if self.control.predicate.distributivity != Distributivity::Distributive {
            return Err(fail(
                "control pair must use a distributive predicate".into(),
            ));
        }
        if self.interventions.is_empty() {
            return Err(fail("no intervention pairs".into()));
        }
        for i in &self.interventions {
            i.validate()?;
            if i.predicate.distributivity != Distributivity::Ambiguous {
                return Err(fail(format!(
                    "intervention {} must use an ambiguous predicate",
                    i.pair_id
                )));
            }
            if i.dp1 != self.control.dp1
                || i.dp2 != self.control.dp2
                || i.hypothesis_subject != self.control.hypothesis_subject
            {
                return Err(fail(format!(
                    "intervention {} does not share subjects with control {}",
                    i.pair_id, self.control.pair_id
                )));
            }
        }
        Ok(())
    }

    /// (control, intervention) pairs, one per intervention.
    pub fn pairs(&self) -> impl Iterator<Item = (&NliPair, &NliPair)> {
        self.interventions.iter().map(move |i| (&self.control, i))
    }
}

/// Number of (control, intervention) pairs across sets.
pub fn count_matched_pairs(sets: &[MatchedSet]) -> usize {
    sets.iter().map(|s| s.interventions.len()).sum()
}

/// The null operator: leaves the pair as it is.
pub fn null_op(pair: &NliPair) -> NliPair {
    pair.clone()
}

/// Replaces the predicate with one of the opposite distributivity type,
/// sampled uniformly among lexicon predicates compatible with both subjects.
pub fn swap_pred<R: Rng + ?Sized>(
    pair: &NliPair,
    lexicon: &Lexicon,
    rng: &mut R,
) -> Result<NliPair> {
    let wanted = pair.predicate.distributivity.flipped();
    let eligible: Vec<&Predicate> = lexicon
        .predicates_of(wanted)
        .filter(|p| p.accepts(pair.dp1.category) && p.accepts(pair.dp2.category))
        .map(|p| &p.predicate)
        .collect();
    if eligible.is_empty() {
        return Err(Error::NoOppositePredicate {
            pair_id: pair.pair_id.clone(),
            wanted,
        });
    }
    let pick = eligible[rng.random_range(0..eligible.len())];
    Ok(pair.with_predicate(pick.clone()))
}

/// Generates matched control/intervention sets.
///
/// Subject pairs are drawn within a category and visited round-robin in a
/// seeded order so the dataset spreads over as many distinct subject pairs
/// as possible before any pair repeats. Each premise yields one matched set
/// per hypothesis subject; both hypotheses of a premise share the same
/// swapped-in ambiguous predicate.
pub fn generate_pairs(
    lexicon: &Lexicon,
    rng_seed: u64,
    max_pairs_per_group: usize,
) -> Result<Vec<MatchedSet>> {
    if max_pairs_per_group == 0 {
        return Err(Error::InvalidArgument(
            "max_pairs_per_group must be at least 1".into(),
        ));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(rng_seed);

    let compatible = |kind: Distributivity, a: Category, b: Category| {
        lexicon
            .predicates_of(kind)
            .filter(move |p| p.accepts(a) && p.accepts(b))
            .map(|p| &p.predicate)
    };

    // Every same-category subject pair that has both a distributive and an
    // ambiguous predicate available, with its own shuffled predicate queue.
    let mut queues: Vec<((usize, usize), Vec<&Predicate>)> = Vec::new();
    let dps = &lexicon.determiner_phrases;
    for i in 0..dps.len() {
        for j in (i + 1)..dps.len() {
            let (a, b) = (dps[i].category, dps[j].category);
            if a != b || compatible(Distributivity::Ambiguous, a, b).next().is_none() {
                continue;
            }
            let preds: Vec<&Predicate> = compatible(Distributivity::Distributive, a, b).collect();
            if !preds.is_empty() {
                queues.push(((i, j), preds));
            }
        }
    }
    if queues.is_empty() {
        return Err(Error::LexiconTooSmall(
            "no same-category pair of determiner phrases has both a distributive and an ambiguous predicate".into(),
        ));
    }
    queues.shuffle(&mut rng);
    for (_, preds) in queues.iter_mut() {
        preds.shuffle(&mut rng);
    }

    let mut sets = Vec::new();
    let max_round = queues.iter().map(|(_, p)| p.len()).max().unwrap_or(0);
    'rounds: for round in 0..max_round {
        for ((i, j), preds) in &queues {
            if sets.len() >= max_pairs_per_group {
                break 'rounds;
            }
            let Some(&predicate) = preds.get(round) else {
                continue;
            };
            let (dp1, dp2) = if rng.random_bool(0.5) {
                (dps[*i].clone(), dps[*j].clone())
            } else {
                (dps[*j].clone(), dps[*i].clone())
            };
            let mut swapped: Option<Predicate> = None;
            for subject in [HypothesisSubject::Dp1, HypothesisSubject::Dp2] {
                if sets.len() >= max_pairs_per_group {
                    break;
                }
                let match_id = format!("m{:04}", sets.len());
                let control = NliPair::new(
                    format!("{match_id}-c"),
                    dp1.clone(),
                    dp2.clone(),
                    subject,
                    predicate.clone(),
                );
                let intervention = match &swapped {
                    Some(p) => control.with_predicate(p.clone()),
                    None => {
                        let pair = swap_pred(&control, lexicon, &mut rng)?;
                        swapped = Some(pair.predicate.clone());
                        pair
                    }
                };
                let intervention = NliPair {
                    pair_id: format!("{match_id}-i0"),
                    ..intervention
                };
                sets.push(MatchedSet::new(match_id, control, vec![intervention])?);
            }
        }
    }
    Ok(sets)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct PairRecord {
    pair_id: String,
    group: Group,
    match_id: String,
    premise: String,
    hypothesis: String,
    dp1: String,
    dp1_category: Category,
    dp2: String,
    dp2_category: Category,
    hypothesis_subject: HypothesisSubject,
    predicate: String,
    predicate_type: Distributivity,
    predicate_phrasal: bool,
    label: PairLabel,
}

impl PairRecord {
    fn new(pair: &NliPair, group: Group, match_id: &str) -> Self {
        Self {
            pair_id: pair.pair_id.clone(),
            group,
            match_id: match_id.to_string(),
            premise: pair.premise.clone(),
            hypothesis: pair.hypothesis.clone(),
            dp1: pair.dp1.text.clone(),
            dp1_category: pair.dp1.category,
            dp2: pair.dp2.text.clone(),
            dp2_category: pair.dp2.category,
            hypothesis_subject: pair.hypothesis_subject,
            predicate: pair.predicate.text.clone(),
            predicate_type: pair.predicate.distributivity,
            predicate_phrasal: pair.predicate.phrasal,
            label: pair.label,
        }
    }

    fn into_pair(self) -> (Group, String, NliPair) {
        let pair = NliPair {
            pair_id: self.pair_id,
            premise: self.premise,
            hypothesis: self.hypothesis,
            dp1: DeterminerPhrase::new(self.dp1, self.dp1_category),
            dp2: DeterminerPhrase::new(self.dp2, self.dp2_category),
            hypothesis_subject: self.hypothesis_subject,
            predicate: Predicate {
                text: self.predicate,
                distributivity: self.predicate_type,
                phrasal: self.predicate_phrasal,
            },
            label: self.label,
        };
        (self.group, self.match_id, pair)
    }
}

/// JSONL serialization: one line per pair, control first within each set.
pub fn dataset_to_jsonl(sets: &[MatchedSet]) -> Result<String> {
    let mut out = String::new();
    for set in sets {
        set.validate()?;
        let rows = std::iter::once(PairRecord::new(&set.control, Group::Control, &set.match_id))
            .chain(
                set.interventions
                    .iter()
                    .map(|p| PairRecord::new(p, Group::Intervention, &set.match_id)),
            );
        for row in rows {
            out.push_str(&serde_json::to_string(&row)?);
            out.push('\n');
        }
    }
    Ok(out)
}

pub fn write_dataset(sets: &[MatchedSet], path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let text = dataset_to_jsonl(sets)?;
    let mut file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    file.write_all(text.as_bytes())
        .map_err(|e| Error::io(path, e))
}

pub fn read_dataset(path: impl AsRef<Path>) -> Result<Vec<MatchedSet>> {
    let path = path.as_ref();
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    parse_dataset(BufReader::new(file)).map_err(|e| match e {
        Error::Io { source, .. } => Error::io(path, source),
        other => other,
    })
}

/// Parses and validates a JSONL dataset, regrouping lines into matched sets
/// in order of first appearance.
pub fn parse_dataset<R: BufRead>(reader: R) -> Result<Vec<MatchedSet>> {
    struct Partial {
        line: usize,
        control: Option<NliPair>,
        interventions: Vec<NliPair>,
    }
    let mut order: Vec<String> = Vec::new();
    let mut partial: HashMap<String, Partial> = HashMap::new();
    let mut ids = BTreeSet::new();

    for (idx, line) in reader.lines().enumerate() {
        let lineno = idx + 1;
        let line = line.map_err(|e| Error::io("<dataset>", e))?;
        if line.trim().is_empty() {
            continue;
        }
        let schema = |message: String| Error::Schema {
            line: lineno,
            message,
        };
        let record: PairRecord = serde_json::from_str(&line).map_err(|e| schema(e.to_string()))?;
        let (group, match_id, pair) = record.into_pair();
        pair.validate().map_err(|e| schema(e.to_string()))?;
        if !ids.insert(pair.pair_id.clone()) {
            return Err(schema(format!("duplicate pair_id {:?}", pair.pair_id)));
        }
        let entry = partial.entry(match_id.clone()).or_insert_with(|| {
            order.push(match_id.clone());
            Partial {
                line: lineno,
                control: None,
                interventions: Vec::new(),
            }
        });
        match group {
            Group::Control => {
                if entry.control.is_some() {
                    return Err(schema(format!(
                        "second control pair for match {match_id:?}"
                    )));
                }
                entry.control = Some(pair);
            }
            Group::Intervention => entry.interventions.push(pair),
        }
    }

    let mut sets = Vec::with_capacity(order.len());
    for match_id in order {
        let p = partial.remove(&match_id).expect("recorded match id");
        let Some(control) = p.control else {
            return Err(Error::Schema {
                line: p.line,
                message: format!("match {match_id:?} has no control pair"),
            });
        };
        let set =
            MatchedSet::new(match_id, control, p.interventions).map_err(|e| Error::Schema {
                line: p.line,
                message: e.to_string(),
            })?;
        sets.push(set);
    }
    Ok(sets)
}

/// Rendered sentences that contain a blocklisted quantifier.
pub fn blocked_sentences<'a>(sets: &'a [MatchedSet], lexicon: &Lexicon) -> Vec<&'a str> {
    let mut hits = Vec::new();
    for set in sets {
        for pair in std::iter::once(&set.control).chain(&set.interventions) {
            for text in [&pair.premise, &pair.hypothesis] {
                if find_blocked_token(text, &lexicon.quantifier_blocklist).is_some() {
                    hits.push(text.as_str());
                }
            }
        }
    }
    hits
}
