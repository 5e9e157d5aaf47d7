//! Single-neuron NIE sweeps with resumable checkpoints.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::dataset::{dataset_to_jsonl, MatchedSet, NliPair};
use crate::effects::{record_from_distributions, MeanSd};
use crate::error::{Error, Result};
use crate::model::{ActivationCoord, Alignment, LabelDistribution, MediatorSpec, NliModel};
use crate::parallel::ordered_map;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NeuronEntry {
    pub coord: ActivationCoord,
    pub mean_nie: f64,
    pub sd_nie: f64,
    pub n: usize,
}

/// Mean single-coordinate NIE per swept coordinate, sorted by coordinate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NeuronEffectTable {
    pub model: String,
    pub n_layers: usize,
    pub hidden_size: usize,
    pub alignment: Alignment,
    pub entries: Vec<NeuronEntry>,
}

impl NeuronEffectTable {
    pub fn get(&self, coord: ActivationCoord) -> Option<&NeuronEntry> {
        self.entries
            .binary_search_by_key(&coord, |e| e.coord)
            .ok()
            .map(|i| &self.entries[i])
    }

    /// Entries ordered by descending `|mean_nie|`, ties by coordinate.
    pub fn ranked_by_magnitude(&self) -> Vec<&NeuronEntry> {
        let mut v: Vec<&NeuronEntry> = self.entries.iter().collect();
        v.sort_by(|a, b| {
            b.mean_nie
                .abs()
                .total_cmp(&a.mean_nie.abs())
                .then(a.coord.cmp(&b.coord))
        });
        v
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepOptions {
    pub alignment: Alignment,
    /// Coordinates to sweep; all of the model's when `None`.
    pub coords: Option<Vec<ActivationCoord>>,
    /// State file written after every chunk.
    pub checkpoint: Option<PathBuf>,
    /// Coordinates per chunk.
    pub checkpoint_every: usize,
    /// Continue from an existing checkpoint instead of refusing to start.
    pub resume: bool,
    pub jobs: usize,
    /// Stop after this many coordinates in this invocation.
    pub max_coords: Option<usize>,
}

impl Default for SweepOptions {
    fn default() -> Self {
        Self {
            alignment: Alignment::default(),
            coords: None,
            checkpoint: None,
            checkpoint_every: 64,
            resume: false,
            jobs: 1,
            max_coords: None,
        }
    }
}

#[derive(Debug, Serialize, Deserialize)]
struct SweepState {
    fingerprint: String,
    total: usize,
    done: Vec<NeuronEntry>,
}

/// Hash identifying a sweep: model metadata, dataset, alignment and
/// coordinate list.
pub fn sweep_fingerprint<M: NliModel + ?Sized>(
    model: &M,
    sets: &[MatchedSet],
    alignment: Alignment,
    coords: &[ActivationCoord],
) -> Result<String> {
    let mut h = Sha256::new();
    h.update(serde_json::to_vec(model.meta())?);
    h.update(dataset_to_jsonl(sets)?.as_bytes());
    h.update(alignment.as_str().as_bytes());
    h.update(serde_json::to_vec(coords)?);
    Ok(hex::encode(h.finalize()))
}

fn load_state(path: &Path) -> Result<SweepState> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    serde_json::from_slice(&bytes).map_err(|e| Error::CheckpointMismatch {
        path: path.to_path_buf(),
        message: format!("unreadable state: {e}"),
    })
}

fn save_state(path: &Path, state: &SweepState) -> Result<()> {
    let tmp = path.with_extension("tmp");
    fs::write(&tmp, serde_json::to_vec(state)?).map_err(|e| Error::io(&tmp, e))?;
    fs::rename(&tmp, path).map_err(|e| Error::io(path, e))
}

struct PairContext<'a> {
    match_id: &'a str,
    control: &'a NliPair,
    intervention: &'a NliPair,
    null: LabelDistribution,
    swap: LabelDistribution,
}

/// Mean NIE of every requested coordinate, each as a single-coordinate
/// mediator, over all matched pairs.
pub fn neuron_sweep<M: NliModel + ?Sized>(
    model: &M,
    sets: &[MatchedSet],
    options: &SweepOptions,
) -> Result<NeuronEffectTable> {
    let meta = model.meta();
    if sets.is_empty() {
        return Err(Error::InvalidArgument(
            "neuron sweep needs a non-empty dataset".into(),
        ));
    }
    if options.checkpoint_every == 0 {
        return Err(Error::InvalidArgument(
            "checkpoint_every must be at least 1".into(),
        ));
    }
    if options.max_coords.is_some() && options.checkpoint.is_none() {
        return Err(Error::InvalidArgument(
            "a coordinate budget needs a checkpoint file, or the partial sweep would be lost"
                .into(),
        ));
    }
    let mut coords = options.coords.clone().unwrap_or_else(|| meta.all_coords());
    coords.sort();
    coords.dedup();
    if coords.is_empty() {
        return Err(Error::InvalidArgument("no coordinates to sweep".into()));
    }
    for c in &coords {
        meta.check_coord(*c)?;
    }

    let fingerprint = sweep_fingerprint(model, sets, options.alignment, &coords)?;
    let mut done: Vec<NeuronEntry> = Vec::new();
    if let Some(path) = &options.checkpoint {
        if path.exists() {
            if !options.resume {
                return Err(Error::CheckpointExists(path.clone()));
            }
            let state = load_state(path)?;
            if state.fingerprint != fingerprint || state.total != coords.len() {
                return Err(Error::CheckpointMismatch {
                    path: path.clone(),
                    message: "model, dataset, alignment or coordinate set differ".into(),
                });
            }
            done = state.done;
            log::info!(
                "resuming sweep with {} of {} coordinates done",
                done.len(),
                coords.len()
            );
        }
    }

    let flat: Vec<(&str, &NliPair, &NliPair)> = sets
        .iter()
        .flat_map(|s| s.pairs().map(move |(c, i)| (s.match_id.as_str(), c, i)))
        .collect();
    let contexts: Vec<PairContext> =
        ordered_map(&flat, options.jobs, meta.thread_safe, |(id, c, i)| {
            Ok(PairContext {
                match_id: id,
                control: c,
                intervention: i,
                null: model.predict(c)?,
                swap: model.predict(i)?,
            })
        })?;

    let remaining = &coords[done.len()..];
    let budget = options.max_coords.unwrap_or(usize::MAX);
    let mut processed = 0;
    for chunk in remaining.chunks(options.checkpoint_every) {
        if processed >= budget {
            break;
        }
        let chunk = &chunk[..chunk.len().min(budget - processed)];
        done.extend(sweep_chunk(model, &contexts, chunk, options)?);
        processed += chunk.len();
        if let Some(path) = &options.checkpoint {
            save_state(
                path,
                &SweepState {
                    fingerprint: fingerprint.clone(),
                    total: coords.len(),
                    done: done.clone(),
                },
            )?;
        }
    }

    if done.len() < coords.len() {
        return Err(Error::SweepInterrupted {
            completed: done.len(),
            total: coords.len(),
            checkpoint: options
                .checkpoint
                .clone()
                .expect("budget requires a checkpoint"),
        });
    }
    if let Some(path) = &options.checkpoint {
        if path.exists() {
            fs::remove_file(path).map_err(|e| Error::io(path, e))?;
        }
    }
    Ok(NeuronEffectTable {
        model: meta.name.clone(),
        n_layers: meta.n_layers,
        hidden_size: meta.hidden_size,
        alignment: options.alignment,
        entries: done,
    })
}

/// One capture pass per pair for the whole chunk, then one patched pass per
/// (pair, coordinate).
fn sweep_chunk<M: NliModel + ?Sized>(
    model: &M,
    contexts: &[PairContext],
    chunk: &[ActivationCoord],
    options: &SweepOptions,
) -> Result<Vec<NeuronEntry>> {
    let chunk_spec = MediatorSpec::new(chunk.to_vec())?;
    let singles: Vec<MediatorSpec> = chunk.iter().map(|c| MediatorSpec::single(*c)).collect();
    let per_pair: Vec<Vec<f64>> =
        ordered_map(contexts, options.jobs, model.meta().thread_safe, |ctx| {
            let (_, snapshot) = model.predict_with_capture(ctx.control, &chunk_spec)?;
            singles
                .iter()
                .map(|spec| {
                    let patch = snapshot.restrict(spec)?;
                    let patched =
                        model.predict_with_patch(ctx.intervention, &patch, options.alignment)?;
                    let record = record_from_distributions(
                        ctx.match_id,
                        &ctx.null,
                        &ctx.swap,
                        &patched,
                        spec,
                        options.alignment,
                    )?;
                    Ok(record.nie.expect("full record"))
                })
                .collect()
        })?;
    Ok(chunk
        .iter()
        .enumerate()
        .map(|(k, coord)| {
            let values: Vec<f64> = per_pair.iter().map(|row| row[k]).collect();
            let stats = MeanSd::of(&values).expect("at least one pair");
            NeuronEntry {
                coord: *coord,
                mean_nie: stats.mean,
                sd_nie: stats.sd,
                n: values.len(),
            }
        })
        .collect())
}
