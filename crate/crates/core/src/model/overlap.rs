use std::collections::BTreeSet;

use crate::dataset::NliPair;
use crate::error::{Error, Result};
use crate::lexicon::words;
use crate::model::{
    ActivationSnapshot, Alignment, LabelDistribution, LayerHooks, MediatorSpec, ModelMeta,
    NliClass, NliModel,
};

/// A classifier that only looks at lexical overlap.
///
/// Its single neuron holds, at every position, the fraction of hypothesis
/// words that also occur in the premise. The output reads the mean of that
/// neuron: `p_entailment = 0.1 + 0.8 * overlap`, with the remainder split
/// evenly between neutral and contradiction.
#[derive(Debug, Clone)]
pub struct OverlapBaseline {
    meta: ModelMeta,
}

impl Default for OverlapBaseline {
    fn default() -> Self {
        Self::new()
    }
}

impl OverlapBaseline {
    pub fn new() -> Self {
        Self {
            meta: ModelMeta {
                name: "overlap".into(),
                n_layers: 1,
                hidden_size: 1,
                n_parameters: 2,
                vocab_size: 1,
                label_order: NliClass::CANONICAL,
                thread_safe: true,
                max_seq_len: 512,
            },
        }
    }

    /// Fraction of hypothesis word tokens found in the premise.
    pub fn overlap_ratio(premise: &str, hypothesis: &str) -> f64 {
        let premise: BTreeSet<String> = words(premise).collect();
        let hyp: Vec<String> = words(hypothesis).collect();
        if hyp.is_empty() {
            return 0.0;
        }
        hyp.iter().filter(|w| premise.contains(*w)).count() as f64 / hyp.len() as f64
    }

    pub fn distribution_for(overlap: f64) -> LabelDistribution {
        let p_e = 0.1 + 0.8 * overlap.clamp(0.0, 1.0);
        let rest = (1.0 - p_e) / 2.0;
        LabelDistribution {
            p_entailment: p_e,
            p_neutral: rest,
            p_contradiction: rest,
        }
    }

    fn encode(&self, pair: &NliPair) -> Result<usize> {
        let len = words(&pair.premise).count() + words(&pair.hypothesis).count();
        if len == 0 {
            return Err(Error::EmptyInput(format!(
                "pair {} renders to empty text",
                pair.pair_id
            )));
        }
        if len > self.meta.max_seq_len {
            return Err(Error::SequenceTooLong {
                len,
                max: self.meta.max_seq_len,
            });
        }
        Ok(len)
    }

    fn forward(
        &self,
        pair: &NliPair,
        seq_len: usize,
        hooks: &mut LayerHooks<'_>,
    ) -> LabelDistribution {
        let r = Self::overlap_ratio(&pair.premise, &pair.hypothesis);
        let mut hidden = vec![vec![r]; seq_len];
        hooks.apply(0, &mut hidden);
        let mean = hidden.iter().map(|h| h[0]).sum::<f64>() / seq_len as f64;
        Self::distribution_for(mean)
    }
}

impl NliModel for OverlapBaseline {
    fn meta(&self) -> &ModelMeta {
        &self.meta
    }

    fn seq_len(&self, pair: &NliPair) -> Result<usize> {
        self.encode(pair)
    }

    fn predict(&self, pair: &NliPair) -> Result<LabelDistribution> {
        let n = self.encode(pair)?;
        Ok(self.forward(pair, n, &mut LayerHooks::none()))
    }

    fn predict_with_capture(
        &self,
        pair: &NliPair,
        spec: &MediatorSpec,
    ) -> Result<(LabelDistribution, ActivationSnapshot)> {
        let n = self.encode(pair)?;
        let mut hooks = LayerHooks::capturing(&self.meta, spec, n)?;
        let d = self.forward(pair, n, &mut hooks);
        Ok((d, hooks.into_snapshot(n).expect("capture hooks")))
    }

    fn predict_with_patch(
        &self,
        pair: &NliPair,
        snapshot: &ActivationSnapshot,
        alignment: Alignment,
    ) -> Result<LabelDistribution> {
        let n = self.encode(pair)?;
        let mut hooks = LayerHooks::patching(&self.meta, snapshot, alignment, n)?;
        Ok(self.forward(pair, n, &mut hooks))
    }
}
