//! Log-odds mediation effects over matched pairs.
//!
//! The response is the odds of non-entailment, `(p_neutral +
//! p_contradiction) / p_entailment`. For a control pair `x`, its swap-pred
//! image `x'` and a mediator `m`:
//!
//! * `y_null = odds(x)`, `y_swap = odds(x')`
//! * `y_swap_m_null = odds(x' with m patched to its value on x)`
//! * `te = ln y_swap - ln y_null`
//! * `nie = ln y_swap - ln y_swap_m_null`
//! * `nde = ln y_swap_m_null - ln y_null`
//!
//! so `te == nie + nde` up to floating-point rounding.

use std::collections::HashMap;
use std::fmt;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::dataset::{MatchedSet, NliPair};
use crate::error::{Error, Result};
use crate::model::{Alignment, LabelDistribution, MediatorSpec, NliModel};
use crate::parallel::ordered_map;

/// Lower bound applied to both odds components before the ratio.
pub const ODDS_FLOOR: f64 = 1e-12;

/// Maximum allowed `|te - (nie + nde)|`.
pub const DECOMPOSITION_TOLERANCE: f64 = 1e-9;

/// Name of the probability-mass convention written into every results file.
pub const MASS_CONVENTION: &str = "p_non_entailment = p_neutral + p_contradiction";

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OddsValue {
    pub value: f64,
    pub p_non_entailment: f64,
    pub p_entailment: f64,
    /// Set when either component was moved into `[floor, 1 - floor]`.
    pub clamped: bool,
}

impl OddsValue {
    pub fn ln(&self) -> f64 {
        self.value.ln()
    }
}

impl fmt::Display for OddsValue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.value)
    }
}

/// Odds of non-entailment with the default floor.
pub fn odds_non_entailment(d: &LabelDistribution) -> OddsValue {
    odds_with_floor(d, ODDS_FLOOR)
}

/// Odds of non-entailment with both components clamped into
/// `[floor, 1 - floor]`. A zero floor disables clamping.
pub fn odds_with_floor(d: &LabelDistribution, floor: f64) -> OddsValue {
    let p_non = d.p_non_entailment();
    let p_ent = d.p_entailment;
    let clamp = |p: f64| {
        if floor > 0.0 {
            p.clamp(floor, 1.0 - floor)
        } else {
            p
        }
    };
    let (num, den) = (clamp(p_non), clamp(p_ent));
    OddsValue {
        value: num / den,
        p_non_entailment: p_non,
        p_entailment: p_ent,
        clamped: num != p_non || den != p_ent,
    }
}

/// `ln(y_swap / y_null)`.
pub fn te_from_odds(y_null: &OddsValue, y_swap: &OddsValue) -> f64 {
    y_swap.ln() - y_null.ln()
}

/// `(te, nie, nde)` from the three odds, checking the decomposition.
pub fn effects_from_odds(
    match_id: &str,
    y_null: &OddsValue,
    y_swap: &OddsValue,
    y_swap_m_null: &OddsValue,
) -> Result<(f64, f64, f64)> {
    let te = te_from_odds(y_null, y_swap);
    let nie = y_swap.ln() - y_swap_m_null.ln();
    let nde = y_swap_m_null.ln() - y_null.ln();
    if !((te - (nie + nde)).abs() < DECOMPOSITION_TOLERANCE) {
        return Err(Error::Decomposition {
            match_id: match_id.to_string(),
            te,
            nie,
            nde,
        });
    }
    Ok((te, nie, nde))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EffectRecord {
    pub match_id: String,
    pub te: f64,
    pub nie: Option<f64>,
    pub nde: Option<f64>,
    pub y_null: OddsValue,
    pub y_swap: OddsValue,
    pub y_swap_m_null: Option<OddsValue>,
    /// `None` for TE-only records.
    pub mediator: Option<MediatorSpec>,
    pub alignment: Option<Alignment>,
}

impl EffectRecord {
    /// Names of the odds values that were clamped.
    pub fn clamp_flags(&self) -> Vec<&'static str> {
        let mut flags = Vec::new();
        if self.y_null.clamped {
            flags.push("y_null");
        }
        if self.y_swap.clamped {
            flags.push("y_swap");
        }
        if self.y_swap_m_null.is_some_and(|y| y.clamped) {
            flags.push("y_swap_m_null");
        }
        flags
    }

    pub fn is_clamped(&self) -> bool {
        !self.clamp_flags().is_empty()
    }
}

/// TE of one (control, intervention) pair. Runs no capture or patching.
pub fn total_effect<M: NliModel + ?Sized>(
    model: &M,
    match_id: &str,
    control: &NliPair,
    intervention: &NliPair,
) -> Result<EffectRecord> {
    let y_null = odds_non_entailment(&model.predict(control)?);
    let y_swap = odds_non_entailment(&model.predict(intervention)?);
    Ok(EffectRecord {
        match_id: match_id.to_string(),
        te: te_from_odds(&y_null, &y_swap),
        nie: None,
        nde: None,
        y_null,
        y_swap,
        y_swap_m_null: None,
        mediator: None,
        alignment: None,
    })
}

/// Full record for a mediator whose null value is taken from the control
/// pair.
pub fn natural_indirect_effect<M: NliModel + ?Sized>(
    model: &M,
    match_id: &str,
    control: &NliPair,
    intervention: &NliPair,
    spec: &MediatorSpec,
    alignment: Alignment,
) -> Result<EffectRecord> {
    spec.check_bounds(model.meta())?;
    let (null_dist, snapshot) = model.predict_with_capture(control, spec)?;
    let swap_dist = model.predict(intervention)?;
    let patched = model.predict_with_patch(intervention, &snapshot, alignment)?;
    record_from_distributions(match_id, &null_dist, &swap_dist, &patched, spec, alignment)
}

/// Assembles a full record from the three forward-pass outputs.
pub fn record_from_distributions(
    match_id: &str,
    null: &LabelDistribution,
    swap: &LabelDistribution,
    swap_m_null: &LabelDistribution,
    spec: &MediatorSpec,
    alignment: Alignment,
) -> Result<EffectRecord> {
    let y_null = odds_non_entailment(null);
    let y_swap = odds_non_entailment(swap);
    let y_m = odds_non_entailment(swap_m_null);
    let (te, nie, nde) = effects_from_odds(match_id, &y_null, &y_swap, &y_m)?;
    Ok(EffectRecord {
        match_id: match_id.to_string(),
        te,
        nie: Some(nie),
        nde: Some(nde),
        y_null,
        y_swap,
        y_swap_m_null: Some(y_m),
        mediator: Some(spec.clone()),
        alignment: Some(alignment),
    })
}

fn flat_pairs(sets: &[MatchedSet]) -> Vec<(&str, &NliPair, &NliPair)> {
    sets.iter()
        .flat_map(|s| s.pairs().map(move |(c, i)| (s.match_id.as_str(), c, i)))
        .collect()
}

/// TE records for every (control, intervention) pair, in dataset order.
pub fn te_records<M: NliModel + ?Sized>(
    model: &M,
    sets: &[MatchedSet],
    jobs: usize,
) -> Result<Vec<EffectRecord>> {
    ordered_map(
        &flat_pairs(sets),
        jobs,
        model.meta().thread_safe,
        |(id, c, i)| total_effect(model, id, c, i),
    )
}

/// Full records for one mediator over every pair, in dataset order.
pub fn nie_records<M: NliModel + ?Sized>(
    model: &M,
    sets: &[MatchedSet],
    spec: &MediatorSpec,
    alignment: Alignment,
    jobs: usize,
) -> Result<Vec<EffectRecord>> {
    spec.check_bounds(model.meta())?;
    ordered_map(
        &flat_pairs(sets),
        jobs,
        model.meta().thread_safe,
        |(id, c, i)| natural_indirect_effect(model, id, c, i, spec, alignment),
    )
}

/// How records sharing a control pair enter the sample.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Pooling {
    /// Every (control, intervention) pair is one observation.
    #[default]
    Pooled,
    /// Records are averaged within each matched set first.
    WithinSet,
}

impl Pooling {
    pub fn as_str(self) -> &'static str {
        match self {
            Pooling::Pooled => "pooled",
            Pooling::WithinSet => "within_set",
        }
    }
}

impl std::str::FromStr for Pooling {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "pooled" => Ok(Pooling::Pooled),
            "within_set" | "within-set" => Ok(Pooling::WithinSet),
            other => Err(Error::InvalidArgument(format!(
                "unknown pooling {other:?}, expected pooled or within_set"
            ))),
        }
    }
}

/// One observation entering the summary statistics.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EffectSample {
    pub te: f64,
    pub nie: Option<f64>,
    pub nde: Option<f64>,
}

/// Per-observation effects under the chosen pooling, in first-appearance
/// order of match ids.
pub fn effect_samples(records: &[EffectRecord], pooling: Pooling) -> Vec<EffectSample> {
    let sample = |r: &EffectRecord| EffectSample {
        te: r.te,
        nie: r.nie,
        nde: r.nde,
    };
    match pooling {
        Pooling::Pooled => records.iter().map(sample).collect(),
        Pooling::WithinSet => {
            let mut order: Vec<&str> = Vec::new();
            let mut groups: HashMap<&str, Vec<&EffectRecord>> = HashMap::new();
            for r in records {
                groups
                    .entry(r.match_id.as_str())
                    .or_insert_with(|| {
                        order.push(r.match_id.as_str());
                        Vec::new()
                    })
                    .push(r);
            }
            order
                .into_iter()
                .map(|id| {
                    let g = &groups[id];
                    let n = g.len() as f64;
                    let avg = |f: &dyn Fn(&EffectRecord) -> Option<f64>| -> Option<f64> {
                        g.iter().map(|r| f(r)).sum::<Option<f64>>().map(|s| s / n)
                    };
                    EffectSample {
                        te: g.iter().map(|r| r.te).sum::<f64>() / n,
                        nie: avg(&|r| r.nie),
                        nde: avg(&|r| r.nde),
                    }
                })
                .collect()
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MeanSd {
    pub mean: f64,
    /// Sample standard deviation; 0 when `n == 1`.
    pub sd: f64,
}

impl MeanSd {
    pub fn of(values: &[f64]) -> Option<Self> {
        let n = values.len();
        if n == 0 {
            return None;
        }
        let mean = values.iter().sum::<f64>() / n as f64;
        let sd = if n == 1 {
            0.0
        } else {
            (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64).sqrt()
        };
        Some(Self { mean, sd })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EffectSummary {
    pub te: MeanSd,
    pub nie: Option<MeanSd>,
    pub nde: Option<MeanSd>,
    pub n: usize,
    /// The sd fields are placeholders because only one observation exists.
    pub single_observation: bool,
    pub pooling: Pooling,
}

/// Means and sample standard deviations with every pair pooled.
pub fn mean_effects(records: &[EffectRecord]) -> Result<EffectSummary> {
    summarize(records, Pooling::Pooled)
}

pub fn summarize(records: &[EffectRecord], pooling: Pooling) -> Result<EffectSummary> {
    let first = records
        .first()
        .ok_or_else(|| Error::Summary("no effect records".into()))?;
    if let Some(r) = records
        .iter()
        .find(|r| r.mediator != first.mediator || r.alignment != first.alignment)
    {
        return Err(Error::Summary(format!(
            "records mix mediators: {} and {}",
            mediator_label(&first.mediator),
            mediator_label(&r.mediator)
        )));
    }
    let samples = effect_samples(records, pooling);
    let column = |f: fn(&EffectSample) -> Option<f64>| -> Option<MeanSd> {
        let values: Option<Vec<f64>> = samples.iter().map(f).collect();
        values.and_then(|v| MeanSd::of(&v))
    };
    let te: Vec<f64> = samples.iter().map(|s| s.te).collect();
    Ok(EffectSummary {
        te: MeanSd::of(&te).expect("non-empty"),
        nie: column(|s| s.nie),
        nde: column(|s| s.nde),
        n: samples.len(),
        single_observation: samples.len() == 1,
        pooling,
    })
}

fn mediator_label(m: &Option<MediatorSpec>) -> String {
    m.as_ref()
        .map_or_else(|| "none".to_string(), |s| s.to_string())
}

/// Flat row in the CSV and JSONL exports.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EffectRow {
    pub match_id: String,
    pub te: f64,
    pub nie: Option<f64>,
    pub nde: Option<f64>,
    pub y_null: f64,
    pub y_swap: f64,
    pub y_swap_m_null: Option<f64>,
    /// `;`-joined names of clamped odds.
    pub clamp_flags: String,
    /// The mediator's layer when all its coordinates share one.
    pub mediator_layer: Option<usize>,
    /// Neuron indices when `mediator_layer` is set, else `layer:neuron`
    /// coordinates; `;`-joined.
    pub mediator_neurons: String,
    pub alignment_mode: Option<Alignment>,
}

impl From<&EffectRecord> for EffectRow {
    fn from(r: &EffectRecord) -> Self {
        let layer = r.mediator.as_ref().and_then(MediatorSpec::single_layer);
        let neurons = match (&r.mediator, layer) {
            (Some(spec), Some(_)) => spec
                .coords()
                .iter()
                .map(|c| c.neuron.to_string())
                .collect::<Vec<_>>()
                .join(";"),
            (Some(spec), None) => spec.to_string(),
            (None, _) => String::new(),
        };
        EffectRow {
            match_id: r.match_id.clone(),
            te: r.te,
            nie: r.nie,
            nde: r.nde,
            y_null: r.y_null.value,
            y_swap: r.y_swap.value,
            y_swap_m_null: r.y_swap_m_null.map(|y| y.value),
            clamp_flags: r.clamp_flags().join(";"),
            mediator_layer: layer,
            mediator_neurons: neurons,
            alignment_mode: r.alignment,
        }
    }
}

pub fn records_to_csv(records: &[EffectRecord]) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    if records.is_empty() {
        w.write_record(EFFECT_COLUMNS)?;
    }
    for r in records {
        w.serialize(EffectRow::from(r))?;
    }
    let bytes = w
        .into_inner()
        .map_err(|e| Error::InvalidArgument(e.to_string()))?;
    Ok(String::from_utf8(bytes).expect("csv output is UTF-8"))
}

pub fn records_to_jsonl(records: &[EffectRecord]) -> Result<String> {
    let mut out = String::new();
    for r in records {
        out.push_str(&serde_json::to_string(&EffectRow::from(r))?);
        out.push('\n');
    }
    Ok(out)
}

pub const EFFECT_COLUMNS: [&str; 11] = [
    "match_id",
    "te",
    "nie",
    "nde",
    "y_null",
    "y_swap",
    "y_swap_m_null",
    "clamp_flags",
    "mediator_layer",
    "mediator_neurons",
    "alignment_mode",
];

pub fn write_records_csv(records: &[EffectRecord], path: &Path) -> Result<()> {
    write_text(path, &records_to_csv(records)?)
}

pub fn write_records_jsonl(records: &[EffectRecord], path: &Path) -> Result<()> {
    write_text(path, &records_to_jsonl(records)?)
}

pub(crate) fn write_text(path: &Path, text: &str) -> Result<()> {
    let mut f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    f.write_all(text.as_bytes()).map_err(|e| Error::io(path, e))
}
