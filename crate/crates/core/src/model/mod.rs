//! The classifier contract analyzed by the mediation toolkit, plus the
//! shipped implementations.
//!
//! A "neuron" is one coordinate of a layer's hidden-state output. Capture
//! reads those coordinates at every token position; patching overwrites them
//! at every aligned position before the next layer runs.

mod checkpoint;
mod hooks;
mod network;
mod overlap;
mod safetensors;
mod toy;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::dataset::NliPair;
use crate::error::{Error, Result};

pub use checkpoint::{load_checkpoint, resolve_checkpoint_dir, save_checkpoint, CACHE_ENV_VAR};
pub use hooks::LayerHooks;
pub use network::{Activation, Block, Matrix, PhraseTokenizer, PooledMlp};
pub use overlap::OverlapBaseline;
pub use toy::{construct_toy_model, ToyModel, ToyOracle};

/// Ternary NLI output classes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NliClass {
    Entailment,
    Neutral,
    Contradiction,
}

impl NliClass {
    pub const CANONICAL: [NliClass; 3] = [
        NliClass::Entailment,
        NliClass::Neutral,
        NliClass::Contradiction,
    ];
}

/// Probabilities over {entailment, neutral, contradiction}.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LabelDistribution {
    pub p_entailment: f64,
    pub p_neutral: f64,
    pub p_contradiction: f64,
}

pub const DISTRIBUTION_SUM_TOLERANCE: f64 = 1e-6;

impl LabelDistribution {
    pub fn new(p_entailment: f64, p_neutral: f64, p_contradiction: f64) -> Result<Self> {
        let d = Self {
            p_entailment,
            p_neutral,
            p_contradiction,
        };
        for p in [p_entailment, p_neutral, p_contradiction] {
            if !(0.0..=1.0).contains(&p) {
                return Err(Error::InvalidDistribution(format!(
                    "probability {p} outside [0, 1]"
                )));
            }
        }
        let sum = p_entailment + p_neutral + p_contradiction;
        if (sum - 1.0).abs() > DISTRIBUTION_SUM_TOLERANCE {
            return Err(Error::InvalidDistribution(format!(
                "probabilities sum to {sum}"
            )));
        }
        Ok(d)
    }

    /// Softmax over logits given in `order`.
    pub fn from_logits(logits: [f64; 3], order: [NliClass; 3]) -> Self {
        let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let exp = logits.map(|z| (z - max).exp());
        let total: f64 = exp.iter().sum();
        let mut d = Self {
            p_entailment: 0.0,
            p_neutral: 0.0,
            p_contradiction: 0.0,
        };
        for (class, e) in order.into_iter().zip(exp) {
            *d.get_mut(class) = e / total;
        }
        d
    }

    pub fn get(&self, class: NliClass) -> f64 {
        match class {
            NliClass::Entailment => self.p_entailment,
            NliClass::Neutral => self.p_neutral,
            NliClass::Contradiction => self.p_contradiction,
        }
    }

    fn get_mut(&mut self, class: NliClass) -> &mut f64 {
        match class {
            NliClass::Entailment => &mut self.p_entailment,
            NliClass::Neutral => &mut self.p_neutral,
            NliClass::Contradiction => &mut self.p_contradiction,
        }
    }

    /// Non-entailment mass: neutral plus contradiction.
    pub fn p_non_entailment(&self) -> f64 {
        self.p_neutral + self.p_contradiction
    }

    /// Most probable class; ties resolve in canonical order.
    pub fn argmax(&self) -> NliClass {
        let mut best = NliClass::Entailment;
        for class in NliClass::CANONICAL {
            if self.get(class) > self.get(best) {
                best = class;
            }
        }
        best
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelMeta {
    pub name: String,
    pub n_layers: usize,
    pub hidden_size: usize,
    pub n_parameters: u64,
    pub vocab_size: usize,
    /// Order of the classifier's raw output rows.
    pub label_order: [NliClass; 3],
    pub thread_safe: bool,
    pub max_seq_len: usize,
}

impl ModelMeta {
    pub fn validate(&self) -> Result<()> {
        if self.n_layers == 0 || self.hidden_size == 0 {
            return Err(Error::InvalidMeta(
                "n_layers and hidden_size must be at least 1".into(),
            ));
        }
        if self.n_parameters == 0 || self.vocab_size == 0 {
            return Err(Error::InvalidMeta(
                "n_parameters and vocab_size must be positive".into(),
            ));
        }
        let mut sorted = self.label_order;
        sorted.sort();
        if sorted != NliClass::CANONICAL {
            return Err(Error::InvalidMeta(format!(
                "label_order {:?} is not a permutation of the three labels",
                self.label_order
            )));
        }
        Ok(())
    }

    pub fn check_coord(&self, coord: ActivationCoord) -> Result<()> {
        if coord.layer >= self.n_layers || coord.neuron >= self.hidden_size {
            return Err(Error::CoordOutOfBounds {
                coord,
                n_layers: self.n_layers,
                hidden_size: self.hidden_size,
            });
        }
        Ok(())
    }

    /// Every (layer, neuron) coordinate in layer-major order.
    pub fn all_coords(&self) -> Vec<ActivationCoord> {
        (0..self.n_layers)
            .flat_map(|layer| {
                (0..self.hidden_size).map(move |neuron| ActivationCoord { layer, neuron })
            })
            .collect()
    }

    pub fn capabilities(&self) -> CapabilityManifest {
        CapabilityManifest {
            name: self.name.clone(),
            n_layers: self.n_layers,
            hidden_size: self.hidden_size,
            label_order: self.label_order,
            thread_safe: self.thread_safe,
        }
    }
}

/// The adapter capability manifest written alongside results.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CapabilityManifest {
    pub name: String,
    pub n_layers: usize,
    pub hidden_size: usize,
    pub label_order: [NliClass; 3],
    pub thread_safe: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct ActivationCoord {
    pub layer: usize,
    pub neuron: usize,
}

impl ActivationCoord {
    pub fn new(layer: usize, neuron: usize) -> Self {
        Self { layer, neuron }
    }
}

impl fmt::Display for ActivationCoord {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}", self.layer, self.neuron)
    }
}

impl FromStr for ActivationCoord {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let bad = || Error::InvalidArgument(format!("expected LAYER:NEURON, got {s:?}"));
        let (l, n) = s.trim().split_once(':').ok_or_else(bad)?;
        Ok(Self {
            layer: l.trim().parse().map_err(|_| bad())?,
            neuron: n.trim().parse().map_err(|_| bad())?,
        })
    }
}

/// The hypothesized mediator: a non-empty set of distinct coordinates.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct MediatorSpec {
    coords: Vec<ActivationCoord>,
}

impl MediatorSpec {
    pub fn new(coords: Vec<ActivationCoord>) -> Result<Self> {
        if coords.is_empty() {
            return Err(Error::InvalidMediator(
                "mediator needs at least one coordinate".into(),
            ));
        }
        let mut seen = std::collections::BTreeSet::new();
        for c in &coords {
            if !seen.insert(*c) {
                return Err(Error::InvalidMediator(format!("duplicate coordinate {c}")));
            }
        }
        Ok(Self { coords })
    }

    pub fn single(coord: ActivationCoord) -> Self {
        Self {
            coords: vec![coord],
        }
    }

    pub fn coords(&self) -> &[ActivationCoord] {
        &self.coords
    }

    pub fn check_bounds(&self, meta: &ModelMeta) -> Result<()> {
        self.coords.iter().try_for_each(|c| meta.check_coord(*c))
    }

    /// The shared layer, if every coordinate lives in one layer.
    pub fn single_layer(&self) -> Option<usize> {
        let first = self.coords[0].layer;
        self.coords
            .iter()
            .all(|c| c.layer == first)
            .then_some(first)
    }
}

impl fmt::Display for MediatorSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let parts: Vec<String> = self.coords.iter().map(|c| c.to_string()).collect();
        f.write_str(&parts.join(";"))
    }
}

/// Activations captured at a mediator, one vector per coordinate indexed by
/// token position.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ActivationSnapshot {
    pub coords: Vec<ActivationCoord>,
    pub values: Vec<Vec<f64>>,
    pub seq_len: usize,
}

impl ActivationSnapshot {
    pub fn validate(&self) -> Result<()> {
        if self.coords.len() != self.values.len() {
            return Err(Error::InvalidArgument(format!(
                "snapshot has {} coordinates but {} value vectors",
                self.coords.len(),
                self.values.len()
            )));
        }
        if let Some(v) = self.values.iter().find(|v| v.len() != self.seq_len) {
            return Err(Error::InvalidArgument(format!(
                "snapshot vector of length {} does not match seq_len {}",
                v.len(),
                self.seq_len
            )));
        }
        Ok(())
    }

    pub fn get(&self, coord: ActivationCoord) -> Option<&[f64]> {
        self.coords
            .iter()
            .position(|c| *c == coord)
            .map(|i| self.values[i].as_slice())
    }

    /// Sub-snapshot holding only the coordinates of `spec`.
    pub fn restrict(&self, spec: &MediatorSpec) -> Result<ActivationSnapshot> {
        let mut values = Vec::with_capacity(spec.coords().len());
        for c in spec.coords() {
            let v = self.get(*c).ok_or_else(|| {
                Error::InvalidMediator(format!("coordinate {c} was not captured"))
            })?;
            values.push(v.to_vec());
        }
        Ok(ActivationSnapshot {
            coords: spec.coords().to_vec(),
            values,
            seq_len: self.seq_len,
        })
    }
}

/// How snapshot positions map onto a patched input of possibly different
/// length.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Alignment {
    /// Reject snapshots whose length differs from the input.
    Strict,
    /// Patch positions `0..min(len_snapshot, len_input)` by index.
    #[default]
    MinLength,
}

impl Alignment {
    pub fn as_str(self) -> &'static str {
        match self {
            Alignment::Strict => "strict",
            Alignment::MinLength => "min_length",
        }
    }
}

impl fmt::Display for Alignment {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Alignment {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "strict" => Ok(Alignment::Strict),
            "min_length" | "min-length" => Ok(Alignment::MinLength),
            other => Err(Error::InvalidArgument(format!(
                "unknown alignment {other:?}, expected strict or min_length"
            ))),
        }
    }
}

/// Contract every analyzed classifier satisfies. Implementations are
/// deterministic: no dropout and no sampling.
pub trait NliModel: Send + Sync {
    fn meta(&self) -> &ModelMeta;

    /// Number of token positions the pair occupies in this model's input.
    fn seq_len(&self, pair: &NliPair) -> Result<usize>;

    fn predict(&self, pair: &NliPair) -> Result<LabelDistribution>;

    /// Predicts while recording the mediator's activations. The distribution
    /// equals `predict(pair)`.
    fn predict_with_capture(
        &self,
        pair: &NliPair,
        spec: &MediatorSpec,
    ) -> Result<(LabelDistribution, ActivationSnapshot)>;

    /// Predicts with the snapshot's coordinates overwritten at every aligned
    /// token position.
    fn predict_with_patch(
        &self,
        pair: &NliPair,
        snapshot: &ActivationSnapshot,
        alignment: Alignment,
    ) -> Result<LabelDistribution>;
}

impl<M: NliModel + ?Sized> NliModel for Box<M> {
    fn meta(&self) -> &ModelMeta {
        (**self).meta()
    }
    fn seq_len(&self, pair: &NliPair) -> Result<usize> {
        (**self).seq_len(pair)
    }
    fn predict(&self, pair: &NliPair) -> Result<LabelDistribution> {
        (**self).predict(pair)
    }
    fn predict_with_capture(
        &self,
        pair: &NliPair,
        spec: &MediatorSpec,
    ) -> Result<(LabelDistribution, ActivationSnapshot)> {
        (**self).predict_with_capture(pair, spec)
    }
    fn predict_with_patch(
        &self,
        pair: &NliPair,
        snapshot: &ActivationSnapshot,
        alignment: Alignment,
    ) -> Result<LabelDistribution> {
        (**self).predict_with_patch(pair, snapshot, alignment)
    }
}

/// A stub that returns the same distribution for every input. It has one
/// layer with a single neuron that is never read.
#[derive(Debug, Clone)]
pub struct ConstantModel {
    meta: ModelMeta,
    output: LabelDistribution,
}

impl ConstantModel {
    pub fn new(name: impl Into<String>, output: LabelDistribution) -> Self {
        Self {
            meta: ModelMeta {
                name: name.into(),
                n_layers: 1,
                hidden_size: 1,
                n_parameters: 3,
                vocab_size: 1,
                label_order: NliClass::CANONICAL,
                thread_safe: true,
                max_seq_len: usize::MAX,
            },
            output,
        }
    }

    pub fn always(class: NliClass) -> Self {
        let mut p = [0.0; 3];
        p[NliClass::CANONICAL
            .iter()
            .position(|c| *c == class)
            .unwrap()] = 1.0;
        let name = format!(
            "constant-{}",
            serde_json::to_value(class).unwrap().as_str().unwrap()
        );
        Self::new(name, LabelDistribution::new(p[0], p[1], p[2]).unwrap())
    }

    fn words(pair: &NliPair) -> usize {
        pair.premise.split_whitespace().count() + pair.hypothesis.split_whitespace().count()
    }
}

impl NliModel for ConstantModel {
    fn meta(&self) -> &ModelMeta {
        &self.meta
    }

    fn seq_len(&self, pair: &NliPair) -> Result<usize> {
        Ok(Self::words(pair))
    }

    fn predict(&self, _pair: &NliPair) -> Result<LabelDistribution> {
        Ok(self.output)
    }

    fn predict_with_capture(
        &self,
        pair: &NliPair,
        spec: &MediatorSpec,
    ) -> Result<(LabelDistribution, ActivationSnapshot)> {
        spec.check_bounds(&self.meta)?;
        let seq_len = Self::words(pair);
        let snapshot = ActivationSnapshot {
            coords: spec.coords().to_vec(),
            values: vec![vec![0.0; seq_len]; spec.coords().len()],
            seq_len,
        };
        Ok((self.output, snapshot))
    }

    fn predict_with_patch(
        &self,
        pair: &NliPair,
        snapshot: &ActivationSnapshot,
        alignment: Alignment,
    ) -> Result<LabelDistribution> {
        LayerHooks::patching(&self.meta, snapshot, alignment, Self::words(pair))?;
        Ok(self.output)
    }
}
