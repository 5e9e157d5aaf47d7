//! On-disk format for [`PooledMlp`] checkpoints.
//!
//! A checkpoint is a directory holding `config.json` (model metadata and
//! per-layer activations), `tokenizer.json` and `model.safetensors`.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::safetensors::{checkpoint_error, deserialize, serialize, Tensor};
use crate::model::{Activation, Block, Matrix, ModelMeta, PhraseTokenizer, PooledMlp};

/// Directory searched for named checkpoints that are not paths.
pub const CACHE_ENV_VAR: &str = "DISTCMA_CACHE";

const CONFIG: &str = "config.json";
const TOKENIZER: &str = "tokenizer.json";
const WEIGHTS: &str = "model.safetensors";

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Config {
    #[serde(flatten)]
    meta: ModelMeta,
    activations: Vec<Activation>,
}

/// Resolves `name` to an existing directory: the path itself, else
/// `$DISTCMA_CACHE/<name>`.
pub fn resolve_checkpoint_dir(name: &str) -> Result<PathBuf> {
    let direct = PathBuf::from(name);
    if direct.is_dir() {
        return Ok(direct);
    }
    if let Some(cache) = std::env::var_os(CACHE_ENV_VAR) {
        let cached = PathBuf::from(cache).join(name);
        if cached.is_dir() {
            return Ok(cached);
        }
    }
    Err(checkpoint_error(
        &direct,
        format!("no such checkpoint directory, and not found under ${CACHE_ENV_VAR}"),
    ))
}

pub fn save_checkpoint(model: &PooledMlp, dir: &Path) -> Result<()> {
    model.validate()?;
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let config = Config {
        meta: model.meta.clone(),
        activations: model.blocks.iter().map(|b| b.activation).collect(),
    };
    write(&dir.join(CONFIG), &serde_json::to_vec_pretty(&config)?)?;
    write(
        &dir.join(TOKENIZER),
        &serde_json::to_vec_pretty(&model.tokenizer)?,
    )?;

    let mut tensors = BTreeMap::new();
    let mut put = |name: String, m: &Matrix| {
        tensors.insert(
            name,
            Tensor::new(vec![m.rows(), m.cols()], m.data().to_vec()),
        );
    };
    put("embeddings".into(), &model.embeddings);
    put("segments".into(), &model.segments);
    put("classifier.weight".into(), &model.classifier);
    for (i, b) in model.blocks.iter().enumerate() {
        put(format!("layers.{i}.token"), &b.token);
        put(format!("layers.{i}.pooled"), &b.pooled);
    }
    for (i, b) in model.blocks.iter().enumerate() {
        tensors.insert(
            format!("layers.{i}.bias"),
            Tensor::new(vec![b.bias.len()], b.bias.clone()),
        );
    }
    tensors.insert(
        "classifier.bias".into(),
        Tensor::new(vec![3], model.classifier_bias.to_vec()),
    );
    let mut metadata = BTreeMap::new();
    metadata.insert("format".to_string(), "distcma-pooled-mlp".to_string());
    write(&dir.join(WEIGHTS), &serialize(&tensors, &metadata))
}

pub fn load_checkpoint(dir: &Path) -> Result<PooledMlp> {
    let config: Config = serde_json::from_slice(&read(&dir.join(CONFIG))?)
        .map_err(|e| checkpoint_error(&dir.join(CONFIG), e.to_string()))?;
    config.meta.validate()?;
    if config.activations.len() != config.meta.n_layers {
        return Err(checkpoint_error(
            &dir.join(CONFIG),
            format!(
                "{} activations for {} layers",
                config.activations.len(),
                config.meta.n_layers
            ),
        ));
    }
    let tokenizer: PhraseTokenizer = serde_json::from_slice(&read(&dir.join(TOKENIZER))?)
        .map_err(|e| checkpoint_error(&dir.join(TOKENIZER), e.to_string()))?;
    let tokenizer = tokenizer.indexed()?;

    let weights_path = dir.join(WEIGHTS);
    let (mut tensors, _) =
        deserialize(&read(&weights_path)?).map_err(|m| checkpoint_error(&weights_path, m))?;
    let mut take = |name: &str| -> Result<Tensor> {
        tensors
            .remove(name)
            .ok_or_else(|| checkpoint_error(&weights_path, format!("missing tensor {name}")))
    };
    let matrix = |t: Tensor, name: &str| -> Result<Matrix> {
        match t.shape[..] {
            [r, c] => Matrix::from_vec(r, c, t.data),
            _ => Err(checkpoint_error(
                &weights_path,
                format!("tensor {name} is not two-dimensional"),
            )),
        }
    };

    let embeddings = matrix(take("embeddings")?, "embeddings")?;
    let segments = matrix(take("segments")?, "segments")?;
    let classifier = matrix(take("classifier.weight")?, "classifier.weight")?;
    let bias = take("classifier.bias")?.data;
    let classifier_bias: [f64; 3] = bias
        .try_into()
        .map_err(|_| checkpoint_error(&weights_path, "classifier.bias must hold 3 values"))?;
    let mut blocks = Vec::with_capacity(config.meta.n_layers);
    for (i, activation) in config.activations.iter().enumerate() {
        let token = format!("layers.{i}.token");
        let pooled = format!("layers.{i}.pooled");
        blocks.push(Block {
            token: matrix(take(&token)?, &token)?,
            pooled: matrix(take(&pooled)?, &pooled)?,
            bias: take(&format!("layers.{i}.bias"))?.data,
            activation: *activation,
        });
    }
    if let Some(extra) = tensors.keys().next() {
        return Err(checkpoint_error(
            &weights_path,
            format!("unexpected tensor {extra}"),
        ));
    }
    let model = PooledMlp {
        meta: config.meta,
        tokenizer,
        embeddings,
        segments,
        blocks,
        classifier,
        classifier_bias,
    };
    model.validate()?;
    Ok(model)
}

fn read(path: &Path) -> Result<Vec<u8>> {
    fs::read(path).map_err(|e| Error::io(path, e))
}

fn write(path: &Path, bytes: &[u8]) -> Result<()> {
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}
