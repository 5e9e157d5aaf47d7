//! Analytically constructed classifier with a planted mediator.
//!
//! Layout (hidden size 8, three layers). Embedding dimensions:
//! `0` constant, `1` is-predicate, `2` ambiguous-predicate, `3` hypothesis
//! segment, `4..8` seeded per-token noise. Every predicate is one vocabulary
//! token, and distributive and ambiguous predicates share an embedding
//! except for dimension 2.
//!
//! * layer 0 splits the ambiguity signal across neurons 0 (per position) and
//!   1 (sequence mean); the other neurons carry segment and noise features.
//! * layer 1 neuron 0 is the planted mediator:
//!   `tanh(gain * mean_amb)`, identical at every position, where `mean_amb`
//!   is the fraction of positions holding an ambiguous predicate. Neuron 1 is
//!   dead: nothing downstream reads it.
//! * layer 2 neurons 0..4 copy the planted neuron; 4..8 mix noise features.
//!
//! The classifier adds `beta * planted` to both non-entailment logits, and
//! every other feature enters all three logits with equal weight, so the
//! output is the softmax of `(b_e, b_n + beta*c, b_c + beta*c)` in closed
//! form.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::dataset::NliPair;
use crate::error::Result;
use crate::lexicon::{Distributivity, Lexicon};
use crate::model::{
    Activation, ActivationCoord, ActivationSnapshot, Alignment, Block, LabelDistribution, Matrix,
    MediatorSpec, ModelMeta, NliClass, NliModel, PhraseTokenizer, PooledMlp,
};

const HIDDEN: usize = 8;
const LAYERS: usize = 3;
const MAX_SEQ_LEN: usize = 64;

/// Construction constants of the toy model, sufficient to compute its
/// outputs in closed form.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ToyOracle {
    /// Carries the whole ambiguity signal.
    pub planted: ActivationCoord,
    /// Read by nothing downstream.
    pub dead: ActivationCoord,
    /// Each carries part of the signal upstream of the planted neuron.
    pub upstream_carriers: Vec<ActivationCoord>,
    /// Copies of the planted neuron in the final layer.
    pub downstream_copies: Vec<ActivationCoord>,
    pub gain: f64,
    pub beta: f64,
    pub bias_entailment: f64,
    pub bias_neutral: f64,
    pub bias_contradiction: f64,
}

#[derive(Debug, Clone)]
pub struct ToyModel {
    network: PooledMlp,
    oracle: ToyOracle,
}

/// Toy model over the shipped seed lexicon.
pub fn construct_toy_model(seed: u64) -> ToyModel {
    ToyModel::new(&Lexicon::seed(), seed)
}

impl ToyModel {
    pub fn new(lexicon: &Lexicon, seed: u64) -> ToyModel {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let oracle = ToyOracle {
            planted: ActivationCoord::new(1, 0),
            dead: ActivationCoord::new(1, 1),
            upstream_carriers: vec![ActivationCoord::new(0, 0), ActivationCoord::new(0, 1)],
            downstream_copies: (0..4).map(|n| ActivationCoord::new(2, n)).collect(),
            gain: 6.0,
            beta: 4.0,
            bias_entailment: 2.0,
            bias_neutral: 0.25,
            bias_contradiction: -0.5,
        };

        // Vocabulary: specials, glue, subject words, whole predicates.
        let mut vocab: Vec<String> = ["[UNK]", "[CLS]", "[SEP]", ".", "and"]
            .iter()
            .map(|s| s.to_string())
            .collect();
        let mut predicate_kind: Vec<Option<Distributivity>> = vec![None; vocab.len()];
        let probe = PhraseTokenizer::new(vocab.clone(), true).expect("specials present");
        for entry in &lexicon.predicates {
            let text = probe.words(&entry.predicate.text).join(" ");
            if !vocab.contains(&text) {
                vocab.push(text);
                predicate_kind.push(Some(entry.predicate.distributivity));
            }
        }
        for dp in &lexicon.determiner_phrases {
            for w in probe.words(&dp.text) {
                if !vocab.contains(&w) {
                    vocab.push(w);
                    predicate_kind.push(None);
                }
            }
        }
        let tokenizer = PhraseTokenizer::new(vocab, true).expect("toy vocabulary is unique");

        let mut embeddings = Matrix::zeros(tokenizer.vocab.len(), HIDDEN);
        for (tok, kind) in predicate_kind.iter().enumerate() {
            embeddings.set(tok, 0, 1.0);
            match kind {
                Some(kind) => {
                    embeddings.set(tok, 1, 1.0);
                    if *kind == Distributivity::Ambiguous {
                        embeddings.set(tok, 2, 1.0);
                    }
                }
                None => {
                    for d in 4..HIDDEN {
                        embeddings.set(tok, d, rng.random_range(-1.0..1.0));
                    }
                }
            }
        }
        let mut segments = Matrix::zeros(2, HIDDEN);
        segments.set(1, 3, 1.0);

        let mut l0 = Block::zeros(HIDDEN, Activation::Identity);
        l0.token.set(0, 2, 1.0);
        l0.pooled.set(1, 2, 1.0);
        l0.token.set(2, 3, 1.0);
        for i in 0..4 {
            for j in 0..4 {
                l0.token.set(3 + i, 4 + j, rng.random_range(-0.8..0.8));
            }
            l0.token.set(3 + i, 1, 0.1);
        }
        l0.token.set(7, 0, 1.0);

        let mut l1 = Block::zeros(HIDDEN, Activation::Tanh);
        l1.pooled.set(0, 0, 0.5 * oracle.gain);
        l1.token.set(0, 1, 0.5 * oracle.gain);
        l1.token.set(1, 2, 0.5);
        for j in 3..7 {
            l1.token.set(1, j, rng.random_range(-1.0..1.0));
        }
        for i in 2..6 {
            l1.token.set(i, 2, 0.3);
            for j in 3..7 {
                l1.token.set(i, j, rng.random_range(-1.0..1.0));
                l1.pooled.set(i, j, rng.random_range(-0.5..0.5));
            }
        }
        l1.token.set(6, 7, 1.0);
        l1.token.set(7, 3, 0.3);
        l1.token.set(7, 2, -0.2);

        let mut l2 = Block::zeros(HIDDEN, Activation::Identity);
        for i in 0..4 {
            l2.token.set(i, 0, 1.0);
        }
        for i in 4..7 {
            for j in [2, 3, 4, 5, 7] {
                l2.token.set(i, j, rng.random_range(-1.0..1.0));
            }
        }
        l2.token.set(7, 6, 1.0);

        let label_order = [
            NliClass::Contradiction,
            NliClass::Neutral,
            NliClass::Entailment,
        ];
        let shared: Vec<f64> = (4..HIDDEN).map(|_| rng.random_range(-0.5..0.5)).collect();
        let mut classifier = Matrix::zeros(3, HIDDEN);
        let mut classifier_bias = [0.0; 3];
        for (row, class) in label_order.iter().enumerate() {
            let (bias, slope) = match class {
                NliClass::Entailment => (oracle.bias_entailment, 0.0),
                NliClass::Neutral => (oracle.bias_neutral, oracle.beta / 4.0),
                NliClass::Contradiction => (oracle.bias_contradiction, oracle.beta / 4.0),
            };
            classifier_bias[row] = bias;
            for n in 0..4 {
                classifier.set(row, n, slope);
            }
            for (k, w) in shared.iter().enumerate() {
                classifier.set(row, 4 + k, *w);
            }
        }

        let vocab_size = tokenizer.vocab.len();
        let mut network = PooledMlp {
            meta: ModelMeta {
                name: "toy".into(),
                n_layers: LAYERS,
                hidden_size: HIDDEN,
                n_parameters: 1,
                vocab_size,
                label_order,
                thread_safe: true,
                max_seq_len: MAX_SEQ_LEN,
            },
            tokenizer,
            embeddings,
            segments,
            blocks: vec![l0, l1, l2],
            classifier,
            classifier_bias,
        };
        network.meta.n_parameters = network.parameter_count();
        network.validate().expect("toy network shapes");
        ToyModel { network, oracle }
    }

    pub fn oracle(&self) -> &ToyOracle {
        &self.oracle
    }

    pub fn network(&self) -> &PooledMlp {
        &self.network
    }

    pub fn into_network(self) -> PooledMlp {
        self.network
    }
}

impl NliModel for ToyModel {
    fn meta(&self) -> &ModelMeta {
        &self.network.meta
    }

    fn seq_len(&self, pair: &NliPair) -> Result<usize> {
        self.network.seq_len(pair)
    }

    fn predict(&self, pair: &NliPair) -> Result<LabelDistribution> {
        self.network.predict(pair)
    }

    fn predict_with_capture(
        &self,
        pair: &NliPair,
        spec: &MediatorSpec,
    ) -> Result<(LabelDistribution, ActivationSnapshot)> {
        self.network.predict_with_capture(pair, spec)
    }

    fn predict_with_patch(
        &self,
        pair: &NliPair,
        snapshot: &ActivationSnapshot,
        alignment: Alignment,
    ) -> Result<LabelDistribution> {
        self.network.predict_with_patch(pair, snapshot, alignment)
    }
}
