//! A small token-level network: embeddings, a stack of blocks that mix each
//! position with the sequence mean, and a mean-pooled linear classifier.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::dataset::NliPair;
use crate::error::{Error, Result};
use crate::model::{
    ActivationSnapshot, Alignment, LabelDistribution, LayerHooks, MediatorSpec, ModelMeta, NliModel,
};

/// Dense row-major matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct Matrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Matrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn from_vec(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::InvalidArgument(format!(
                "matrix {rows}x{cols} needs {} values, got {}",
                rows * cols,
                data.len()
            )));
        }
        Ok(Self { rows, cols, data })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.data[r * self.cols + c]
    }

    pub fn set(&mut self, r: usize, c: usize, v: f64) {
        self.data[r * self.cols + c] = v;
    }

    pub fn row(&self, r: usize) -> &[f64] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    fn mul_vec_into(&self, x: &[f64], out: &mut [f64]) {
        for (r, o) in out.iter_mut().enumerate() {
            *o += self.row(r).iter().zip(x).map(|(a, b)| a * b).sum::<f64>();
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    Identity,
    Tanh,
    Relu,
}

impl Activation {
    fn apply(self, x: f64) -> f64 {
        match self {
            Activation::Identity => x,
            Activation::Tanh => x.tanh(),
            Activation::Relu => x.max(0.0),
        }
    }
}

/// `out[t] = act(token · x[t] + pooled · mean_s x[s] + bias)`.
#[derive(Debug, Clone, PartialEq)]
pub struct Block {
    pub token: Matrix,
    pub pooled: Matrix,
    pub bias: Vec<f64>,
    pub activation: Activation,
}

impl Block {
    pub fn zeros(hidden: usize, activation: Activation) -> Self {
        Self {
            token: Matrix::zeros(hidden, hidden),
            pooled: Matrix::zeros(hidden, hidden),
            bias: vec![0.0; hidden],
            activation,
        }
    }

    fn forward(&self, x: &[Vec<f64>]) -> Vec<Vec<f64>> {
        let mean = mean_rows(x);
        let mut shared = self.bias.clone();
        self.pooled.mul_vec_into(&mean, &mut shared);
        x.iter()
            .map(|row| {
                let mut out = shared.clone();
                self.token.mul_vec_into(row, &mut out);
                out.iter_mut().for_each(|v| *v = self.activation.apply(*v));
                out
            })
            .collect()
    }
}

fn mean_rows(x: &[Vec<f64>]) -> Vec<f64> {
    let width = x.first().map_or(0, Vec::len);
    let mut mean = vec![0.0; width];
    for row in x {
        for (m, v) in mean.iter_mut().zip(row) {
            *m += v;
        }
    }
    let n = x.len() as f64;
    mean.iter_mut().for_each(|m| *m /= n);
    mean
}

/// Greedy longest-match tokenizer over a vocabulary whose entries may span
/// several words ("pushed a rock" can be a single token).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PhraseTokenizer {
    pub vocab: Vec<String>,
    pub lowercase: bool,
    pub unk_token: String,
    pub cls_token: String,
    pub sep_token: String,
    #[serde(skip)]
    index: HashMap<String, usize>,
    #[serde(skip)]
    max_phrase_words: usize,
}

impl PhraseTokenizer {
    pub fn new(vocab: Vec<String>, lowercase: bool) -> Result<Self> {
        Self {
            vocab,
            lowercase,
            unk_token: "[UNK]".into(),
            cls_token: "[CLS]".into(),
            sep_token: "[SEP]".into(),
            index: HashMap::new(),
            max_phrase_words: 1,
        }
        .indexed()
    }

    /// Builds the lookup tables; call after deserializing.
    pub fn indexed(mut self) -> Result<Self> {
        self.index.clear();
        for (i, entry) in self.vocab.iter().enumerate() {
            if self.index.insert(entry.clone(), i).is_some() {
                return Err(Error::InvalidArgument(format!(
                    "duplicate vocabulary entry {entry:?}"
                )));
            }
        }
        for special in [&self.unk_token, &self.cls_token, &self.sep_token] {
            if !self.index.contains_key(special) {
                return Err(Error::InvalidArgument(format!(
                    "vocabulary is missing special token {special:?}"
                )));
            }
        }
        self.max_phrase_words = self
            .vocab
            .iter()
            .map(|e| e.split(' ').count())
            .max()
            .unwrap_or(1);
        Ok(self)
    }

    pub fn id(&self, token: &str) -> Option<usize> {
        self.index.get(token).copied()
    }

    /// Whitespace words with sentence punctuation split off.
    pub fn words(&self, text: &str) -> Vec<String> {
        let mut out = Vec::new();
        for raw in text.split_whitespace() {
            let w = if self.lowercase {
                raw.to_lowercase()
            } else {
                raw.to_string()
            };
            let trimmed = w.trim_end_matches(['.', ',', '!', '?', ';']);
            if !trimmed.is_empty() {
                out.push(trimmed.to_string());
            }
            out.extend(w[trimmed.len()..].chars().map(String::from));
        }
        out
    }

    pub fn encode_text(&self, text: &str) -> Vec<usize> {
        let words = self.words(text);
        let unk = self.index[&self.unk_token];
        let mut ids = Vec::with_capacity(words.len());
        let mut i = 0;
        while i < words.len() {
            let longest = self.max_phrase_words.min(words.len() - i);
            let hit = (1..=longest).rev().find_map(|n| {
                self.index
                    .get(&words[i..i + n].join(" "))
                    .map(|&id| (id, n))
            });
            let (id, n) = hit.unwrap_or((unk, 1));
            ids.push(id);
            i += n;
        }
        ids
    }

    /// `[CLS] premise [SEP] hypothesis [SEP]` with segment ids 0 and 1.
    pub fn encode_pair(&self, premise: &str, hypothesis: &str) -> Vec<(usize, usize)> {
        let cls = self.index[&self.cls_token];
        let sep = self.index[&self.sep_token];
        let mut out = vec![(cls, 0)];
        out.extend(self.encode_text(premise).into_iter().map(|id| (id, 0)));
        out.push((sep, 0));
        out.extend(self.encode_text(hypothesis).into_iter().map(|id| (id, 1)));
        out.push((sep, 1));
        out
    }
}

/// The network behind the toy model and the external-checkpoint adapter.
#[derive(Debug, Clone)]
pub struct PooledMlp {
    pub meta: ModelMeta,
    pub tokenizer: PhraseTokenizer,
    /// `vocab × hidden`.
    pub embeddings: Matrix,
    /// `2 × hidden`, added to premise (row 0) and hypothesis (row 1) tokens.
    pub segments: Matrix,
    pub blocks: Vec<Block>,
    /// `3 × hidden`; rows follow `meta.label_order`.
    pub classifier: Matrix,
    pub classifier_bias: [f64; 3],
}

impl PooledMlp {
    pub fn parameter_count(&self) -> u64 {
        let blocks: usize = self
            .blocks
            .iter()
            .map(|b| b.token.data().len() + b.pooled.data().len() + b.bias.len())
            .sum();
        (self.embeddings.data().len()
            + self.segments.data().len()
            + blocks
            + self.classifier.data().len()
            + 3) as u64
    }

    /// Checks that every tensor matches the declared shapes.
    pub fn validate(&self) -> Result<()> {
        self.meta.validate()?;
        let h = self.meta.hidden_size;
        let bad = |what: &str| Err(Error::InvalidMeta(format!("{what} has the wrong shape")));
        if self.blocks.len() != self.meta.n_layers {
            return bad("block stack");
        }
        if self.embeddings.rows() != self.tokenizer.vocab.len() || self.embeddings.cols() != h {
            return bad("embedding matrix");
        }
        if self.segments.rows() != 2 || self.segments.cols() != h {
            return bad("segment matrix");
        }
        if self.classifier.rows() != 3 || self.classifier.cols() != h {
            return bad("classifier");
        }
        for b in &self.blocks {
            if b.token.rows() != h
                || b.token.cols() != h
                || b.pooled.rows() != h
                || b.pooled.cols() != h
            {
                return bad("block weight");
            }
            if b.bias.len() != h {
                return bad("block bias");
            }
        }
        Ok(())
    }

    pub fn encode(&self, pair: &NliPair) -> Result<Vec<(usize, usize)>> {
        if pair.premise.trim().is_empty() || pair.hypothesis.trim().is_empty() {
            return Err(Error::EmptyInput(format!(
                "pair {} renders to empty text",
                pair.pair_id
            )));
        }
        let ids = self.tokenizer.encode_pair(&pair.premise, &pair.hypothesis);
        if ids.len() > self.meta.max_seq_len {
            return Err(Error::SequenceTooLong {
                len: ids.len(),
                max: self.meta.max_seq_len,
            });
        }
        Ok(ids)
    }

    pub fn forward(&self, ids: &[(usize, usize)], hooks: &mut LayerHooks<'_>) -> LabelDistribution {
        let mut hidden: Vec<Vec<f64>> = ids
            .iter()
            .map(|&(tok, seg)| {
                self.embeddings
                    .row(tok)
                    .iter()
                    .zip(self.segments.row(seg))
                    .map(|(a, b)| a + b)
                    .collect()
            })
            .collect();
        for (layer, block) in self.blocks.iter().enumerate() {
            hidden = block.forward(&hidden);
            hooks.apply(layer, &mut hidden);
        }
        let pooled = mean_rows(&hidden);
        let mut logits = self.classifier_bias;
        for (r, z) in logits.iter_mut().enumerate() {
            *z += self
                .classifier
                .row(r)
                .iter()
                .zip(&pooled)
                .map(|(a, b)| a * b)
                .sum::<f64>();
        }
        LabelDistribution::from_logits(logits, self.meta.label_order)
    }
}

impl NliModel for PooledMlp {
    fn meta(&self) -> &ModelMeta {
        &self.meta
    }

    fn seq_len(&self, pair: &NliPair) -> Result<usize> {
        Ok(self.encode(pair)?.len())
    }

    fn predict(&self, pair: &NliPair) -> Result<LabelDistribution> {
        let ids = self.encode(pair)?;
        Ok(self.forward(&ids, &mut LayerHooks::none()))
    }

    fn predict_with_capture(
        &self,
        pair: &NliPair,
        spec: &MediatorSpec,
    ) -> Result<(LabelDistribution, ActivationSnapshot)> {
        let ids = self.encode(pair)?;
        let mut hooks = LayerHooks::capturing(&self.meta, spec, ids.len())?;
        let dist = self.forward(&ids, &mut hooks);
        let snapshot = hooks.into_snapshot(ids.len()).expect("capture hooks");
        Ok((dist, snapshot))
    }

    fn predict_with_patch(
        &self,
        pair: &NliPair,
        snapshot: &ActivationSnapshot,
        alignment: Alignment,
    ) -> Result<LabelDistribution> {
        let ids = self.encode(pair)?;
        let mut hooks = LayerHooks::patching(&self.meta, snapshot, alignment, ids.len())?;
        Ok(self.forward(&ids, &mut hooks))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tokenizer() -> PhraseTokenizer {
        let vocab = [
            "[UNK]",
            "[CLS]",
            "[SEP]",
            ".",
            "mia",
            "and",
            "lin",
            "pushed a rock",
            "pushed",
        ];
        PhraseTokenizer::new(vocab.iter().map(|s| s.to_string()).collect(), true).unwrap()
    }

    #[test]
    fn longest_match_prefers_phrases() {
        let t = tokenizer();
        assert_eq!(
            t.words("Mia pushed a rock."),
            vec!["mia", "pushed", "a", "rock", "."]
        );
        let ids = t.encode_text("Mia pushed a rock.");
        assert_eq!(ids, vec![4, 7, 3]);
        // "pushed a box" falls back to single words; unknown words map to [UNK].
        assert_eq!(t.encode_text("Mia pushed a box."), vec![4, 8, 0, 0, 3]);
    }

    #[test]
    fn pair_encoding_layout() {
        let t = tokenizer();
        let ids = t.encode_pair("Mia and Lin pushed a rock.", "Mia pushed a rock.");
        let toks: Vec<usize> = ids.iter().map(|p| p.0).collect();
        assert_eq!(toks, vec![1, 4, 5, 6, 7, 3, 2, 4, 7, 3, 2]);
        assert_eq!(ids.iter().filter(|p| p.1 == 1).count(), 4);
    }

    #[test]
    fn tokenizer_requires_specials() {
        assert!(PhraseTokenizer::new(vec!["a".into()], true).is_err());
        let dup = ["[UNK]", "[CLS]", "[SEP]", "a", "a"]
            .iter()
            .map(|s| s.to_string())
            .collect();
        assert!(PhraseTokenizer::new(dup, true).is_err());
    }

    #[test]
    fn block_mixes_position_and_mean() {
        let mut b = Block::zeros(2, Activation::Identity);
        b.token.set(0, 0, 1.0);
        b.pooled.set(1, 0, 1.0);
        b.bias = vec![0.0, 0.5];
        let out = b.forward(&[vec![1.0, 0.0], vec![3.0, 0.0]]);
        assert_eq!(out, vec![vec![1.0, 2.5], vec![3.0, 2.5]]);
    }

    #[test]
    fn activations() {
        assert_eq!(Activation::Relu.apply(-2.0), 0.0);
        assert_eq!(Activation::Identity.apply(-2.0), -2.0);
        assert!((Activation::Tanh.apply(0.5) - 0.5f64.tanh()).abs() < 1e-15);
    }
}
