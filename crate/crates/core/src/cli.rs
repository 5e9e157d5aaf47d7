//! Command-line front end: `generate`, `te`, `nie` and `report`.
//!
//! Settings resolve as command-line flag, then `--config` TOML file, then
//! built-in default. The effective configuration is echoed into every
//! `run_manifest.json`.

use std::path::{Path, PathBuf};

use anyhow::{bail, Context};
use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::analysis::{
    emit_report, group_accuracy, layerwise_nie, neuron_sweep, top_k_selection, LayerwiseMode,
    ModelManifest, ModelReport, RunManifest, SweepOptions,
};
use crate::dataset::{dataset_to_jsonl, generate_pairs, read_dataset, MatchedSet};
use crate::effects::{effect_samples, summarize, te_records, write_text, Pooling};
use crate::lexicon::{load_lexicon, Lexicon};
use crate::model::{
    load_checkpoint, resolve_checkpoint_dir, ActivationCoord, Alignment, ModelMeta, NliModel,
    OverlapBaseline, ToyModel,
};
use crate::stats::one_sample_t_allow_constant;

pub const DEFAULT_MAX_PAIRS: usize = 164;
pub const DEFAULT_ALPHA: f64 = 0.05;
pub const DEFAULT_TOPK_FRACTION: f64 = 0.01;
pub const DEFAULT_CHECKPOINT_EVERY: usize = 64;
pub const SWEEP_CHECKPOINT: &str = "nie_sweep.checkpoint.json";

#[derive(Debug, Parser)]
#[command(
    name = "distcma",
    version,
    about = "Distributivity NLI datasets and causal mediation analysis"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a matched control/intervention dataset as JSONL.
    Generate(Flags),
    /// Total effects per matched pair and a one-sided t-test on their mean.
    Te(Flags),
    /// Neuron-wise NIE sweep, top-k selection and layer-wise NIE.
    Nie(Flags),
    /// Everything: TE, t-test, group accuracy, sweeps and figures.
    Report(Flags),
}

impl Command {
    fn name(&self) -> &'static str {
        match self {
            Command::Generate(_) => "generate",
            Command::Te(_) => "te",
            Command::Nie(_) => "nie",
            Command::Report(_) => "report",
        }
    }

    fn flags(&self) -> &Flags {
        match self {
            Command::Generate(f) | Command::Te(f) | Command::Nie(f) | Command::Report(f) => f,
        }
    }
}

#[derive(Debug, Clone, Default, Args)]
pub struct Flags {
    /// TOML file with any of the settings below.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Lexicon TOML; the shipped seed lexicon when absent.
    #[arg(long)]
    pub lexicon: Option<PathBuf>,
    /// Dataset JSONL; generated in memory from the lexicon when absent.
    #[arg(long)]
    pub dataset: Option<PathBuf>,
    /// `toy`, `overlap` or a checkpoint directory; comma-separated list.
    #[arg(long)]
    pub model: Option<String>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long, value_parser = ["strict", "min_length"])]
    pub alignment: Option<String>,
    #[arg(long)]
    pub alpha: Option<f64>,
    #[arg(long)]
    pub topk_fraction: Option<f64>,
    /// Coordinates to sweep, e.g. `0:3,2:*`.
    #[arg(long)]
    pub coords: Option<String>,
    #[arg(long)]
    pub jobs: Option<usize>,
    /// Output file for `generate`, output directory otherwise.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Continue an interrupted sweep from its checkpoint.
    #[arg(long)]
    pub resume: bool,
    /// Matched sets per group when generating.
    #[arg(long)]
    pub max_pairs: Option<usize>,
    /// Stop the sweep after this many coordinates, keeping the checkpoint.
    #[arg(long)]
    pub max_coords: Option<usize>,
    #[arg(long)]
    pub checkpoint_every: Option<usize>,
    #[arg(long, value_parser = ["joint", "sum_of_individual"])]
    pub layerwise_mode: Option<String>,
    #[arg(long, value_parser = ["pooled", "within_set"])]
    pub pooling: Option<String>,
}

/// Settings accepted in the `--config` file.
#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FileConfig {
    pub lexicon: Option<PathBuf>,
    pub dataset: Option<PathBuf>,
    pub model: Option<String>,
    pub seed: Option<u64>,
    pub alignment: Option<Alignment>,
    pub alpha: Option<f64>,
    pub topk_fraction: Option<f64>,
    pub coords: Option<String>,
    pub jobs: Option<usize>,
    pub out: Option<PathBuf>,
    pub resume: Option<bool>,
    pub max_pairs: Option<usize>,
    pub max_coords: Option<usize>,
    pub checkpoint_every: Option<usize>,
    pub layerwise_mode: Option<LayerwiseMode>,
    pub pooling: Option<Pooling>,
}

/// Fully resolved settings of one run.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunConfig {
    pub lexicon: Option<PathBuf>,
    pub dataset: Option<PathBuf>,
    pub models: Vec<String>,
    pub seed: u64,
    pub alignment: Alignment,
    pub alpha: f64,
    pub topk_fraction: f64,
    pub coords: Option<String>,
    pub jobs: usize,
    pub out: PathBuf,
    pub resume: bool,
    pub max_pairs: usize,
    pub max_coords: Option<usize>,
    pub checkpoint_every: usize,
    pub layerwise_mode: LayerwiseMode,
    pub pooling: Pooling,
}

impl RunConfig {
    pub fn resolve(command: &str, flags: &Flags) -> anyhow::Result<Self> {
        let file = match &flags.config {
            Some(path) => {
                let text = std::fs::read_to_string(path)
                    .with_context(|| format!("reading config {}", path.display()))?;
                toml::from_str::<FileConfig>(&text)
                    .with_context(|| format!("parsing config {}", path.display()))?
            }
            None => FileConfig::default(),
        };
        let default_out = if command == "generate" {
            "distnli.jsonl"
        } else {
            "results"
        };
        let model = flags
            .model
            .clone()
            .or(file.model)
            .unwrap_or_else(|| "toy".into());
        let config = RunConfig {
            lexicon: flags.lexicon.clone().or(file.lexicon),
            dataset: flags.dataset.clone().or(file.dataset),
            models: model
                .split(',')
                .map(str::trim)
                .filter(|s| !s.is_empty())
                .map(String::from)
                .collect(),
            seed: flags.seed.or(file.seed).unwrap_or(0),
            alignment: match &flags.alignment {
                Some(a) => a.parse()?,
                None => file.alignment.unwrap_or_default(),
            },
            alpha: flags.alpha.or(file.alpha).unwrap_or(DEFAULT_ALPHA),
            topk_fraction: flags
                .topk_fraction
                .or(file.topk_fraction)
                .unwrap_or(DEFAULT_TOPK_FRACTION),
            coords: flags.coords.clone().or(file.coords),
            jobs: flags.jobs.or(file.jobs).unwrap_or(1),
            out: flags
                .out
                .clone()
                .or(file.out)
                .unwrap_or_else(|| default_out.into()),
            resume: flags.resume || file.resume.unwrap_or(false),
            max_pairs: flags
                .max_pairs
                .or(file.max_pairs)
                .unwrap_or(DEFAULT_MAX_PAIRS),
            max_coords: flags.max_coords.or(file.max_coords),
            checkpoint_every: flags
                .checkpoint_every
                .or(file.checkpoint_every)
                .unwrap_or(DEFAULT_CHECKPOINT_EVERY),
            layerwise_mode: match &flags.layerwise_mode {
                Some(m) => m.parse()?,
                None => file.layerwise_mode.unwrap_or_default(),
            },
            pooling: match &flags.pooling {
                Some(p) => p.parse()?,
                None => file.pooling.unwrap_or_default(),
            },
        };
        config.validate()?;
        Ok(config)
    }

    pub fn validate(&self) -> anyhow::Result<()> {
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            bail!("alpha must lie in (0, 1), got {}", self.alpha);
        }
        if !(self.topk_fraction > 0.0 && self.topk_fraction <= 1.0) {
            bail!(
                "topk-fraction must lie in (0, 1], got {}",
                self.topk_fraction
            );
        }
        if self.models.is_empty() {
            bail!("no model given");
        }
        if self.jobs == 0 {
            bail!("jobs must be at least 1");
        }
        if self.max_pairs == 0 {
            bail!("max-pairs must be at least 1");
        }
        if self.checkpoint_every == 0 {
            bail!("checkpoint-every must be at least 1");
        }
        Ok(())
    }
}

/// Parses a coordinate filter such as `0:3,0:5,2:*`.
pub fn parse_coords(filter: &str, meta: &ModelMeta) -> anyhow::Result<Vec<ActivationCoord>> {
    let mut out = Vec::new();
    for part in filter.split(',').map(str::trim).filter(|s| !s.is_empty()) {
        match part.split_once(':') {
            Some((layer, "*")) => {
                let layer: usize = layer
                    .trim()
                    .parse()
                    .with_context(|| format!("bad layer in coordinate filter {part:?}"))?;
                if layer >= meta.n_layers {
                    bail!(
                        "layer {layer} out of bounds for model with {} layers",
                        meta.n_layers
                    );
                }
                out.extend((0..meta.hidden_size).map(|n| ActivationCoord::new(layer, n)));
            }
            _ => {
                let c: ActivationCoord = part.parse()?;
                meta.check_coord(c)?;
                out.push(c);
            }
        }
    }
    if out.is_empty() {
        bail!("coordinate filter {filter:?} selects nothing");
    }
    out.sort();
    out.dedup();
    Ok(out)
}

fn load_model(name: &str, lexicon: &Lexicon, seed: u64) -> anyhow::Result<Box<dyn NliModel>> {
    Ok(match name {
        "toy" => Box::new(ToyModel::new(lexicon, seed)),
        "overlap" => Box::new(OverlapBaseline::new()),
        other => {
            let dir = resolve_checkpoint_dir(other)?;
            Box::new(load_checkpoint(&dir).with_context(|| format!("loading model {other}"))?)
        }
    })
}

fn load_lexicon_for(config: &RunConfig) -> anyhow::Result<Lexicon> {
    match &config.lexicon {
        Some(path) => Ok(load_lexicon(path)?),
        None => Ok(Lexicon::seed()),
    }
}

fn load_sets(config: &RunConfig, lexicon: &Lexicon) -> anyhow::Result<Vec<MatchedSet>> {
    match &config.dataset {
        Some(path) => Ok(read_dataset(path)?),
        None => Ok(generate_pairs(lexicon, config.seed, config.max_pairs)?),
    }
}

fn sha256_hex(text: &str) -> String {
    hex::encode(Sha256::digest(text.as_bytes()))
}

fn base_manifest(command: &str, config: &RunConfig) -> anyhow::Result<RunManifest> {
    let mut m = RunManifest::new(command, serde_json::to_value(config)?);
    m.seed = config.seed;
    m.alignment = config.alignment;
    m.pooling = config.pooling;
    m.layerwise_mode = config.layerwise_mode;
    m.topk_fraction = config.topk_fraction;
    Ok(m)
}

pub fn run(cli: Cli) -> anyhow::Result<()> {
    let name = cli.command.name();
    let config = RunConfig::resolve(name, cli.command.flags())?;
    match cli.command {
        Command::Generate(_) => cmd_generate(&config),
        Command::Te(_) => cmd_te(&config),
        Command::Nie(_) => cmd_nie(&config),
        Command::Report(_) => cmd_report(&config),
    }
}

pub fn cmd_generate(config: &RunConfig) -> anyhow::Result<()> {
    let lexicon = load_lexicon_for(config)?;
    let sets = generate_pairs(&lexicon, config.seed, config.max_pairs)?;
    let jsonl = dataset_to_jsonl(&sets)?;
    if let Some(parent) = config.out.parent().filter(|p| !p.as_os_str().is_empty()) {
        std::fs::create_dir_all(parent)
            .with_context(|| format!("creating {}", parent.display()))?;
    }
    write_text(&config.out, &jsonl)?;
    let mut manifest = base_manifest("generate", config)?;
    manifest.dataset_sha256 = Some(sha256_hex(&jsonl));
    manifest.outputs = vec![config
        .out
        .file_name()
        .map(|f| f.to_string_lossy().into_owned())
        .unwrap_or_default()];
    let dir = config
        .out
        .parent()
        .filter(|p| !p.as_os_str().is_empty())
        .unwrap_or(Path::new("."));
    manifest.write(dir)?;
    log::info!(
        "wrote {} matched sets to {}",
        sets.len(),
        config.out.display()
    );
    Ok(())
}

/// Shared loading for the analysis subcommands.
struct Inputs {
    sets: Vec<MatchedSet>,
    models: Vec<Box<dyn NliModel>>,
    dataset_sha256: String,
}

fn load_inputs(config: &RunConfig) -> anyhow::Result<Inputs> {
    let lexicon = load_lexicon_for(config)?;
    let sets = load_sets(config, &lexicon)?;
    if sets.is_empty() {
        bail!("dataset is empty");
    }
    let models = config
        .models
        .iter()
        .map(|m| load_model(m, &lexicon, config.seed))
        .collect::<anyhow::Result<Vec<_>>>()?;
    let dataset_sha256 = sha256_hex(&dataset_to_jsonl(&sets)?);
    Ok(Inputs {
        sets,
        models,
        dataset_sha256,
    })
}

fn te_part(
    model: &dyn NliModel,
    sets: &[MatchedSet],
    config: &RunConfig,
    report: &mut ModelReport,
) -> anyhow::Result<()> {
    let records = te_records(model, sets, config.jobs)?;
    let summary = summarize(&records, config.pooling)?;
    let te: Vec<f64> = effect_samples(&records, config.pooling)
        .iter()
        .map(|s| s.te)
        .collect();
    let ttest = one_sample_t_allow_constant(&te, config.alpha)?;
    report.records = records;
    report.summary = Some(summary);
    report.ttest = Some(ttest);
    Ok(())
}

fn nie_part(
    model: &dyn NliModel,
    sets: &[MatchedSet],
    config: &RunConfig,
    report: &mut ModelReport,
    checkpoint: PathBuf,
) -> anyhow::Result<()> {
    let coords = match &config.coords {
        Some(filter) => Some(parse_coords(filter, model.meta())?),
        None => None,
    };
    let options = SweepOptions {
        alignment: config.alignment,
        coords,
        checkpoint: Some(checkpoint),
        checkpoint_every: config.checkpoint_every,
        resume: config.resume,
        jobs: config.jobs,
        max_coords: config.max_coords,
    };
    let table = neuron_sweep(model, sets, &options)?;
    let selection = top_k_selection(&table, config.topk_fraction)?;
    report.layers = layerwise_nie(
        model,
        sets,
        &selection,
        config.alignment,
        config.layerwise_mode,
        config.jobs,
    )?;
    report.table = Some(table);
    Ok(())
}

fn checkpoint_path(config: &RunConfig, model: &ModelMeta, n_models: usize) -> PathBuf {
    if n_models == 1 {
        config.out.join(SWEEP_CHECKPOINT)
    } else {
        config.out.join(format!(
            "{}.{SWEEP_CHECKPOINT}",
            crate::analysis::report::slug(&model.name)
        ))
    }
}

fn finish(
    command: &str,
    config: &RunConfig,
    inputs: &Inputs,
    reports: &[ModelReport],
) -> anyhow::Result<()> {
    let mut manifest = base_manifest(command, config)?;
    manifest.dataset_sha256 = Some(inputs.dataset_sha256.clone());
    manifest.models = inputs
        .models
        .iter()
        .map(|m| ModelManifest::from(m.meta()))
        .collect();
    let written = emit_report(reports, &manifest, &config.out)?;
    log::info!("wrote {} files to {}", written.len(), config.out.display());
    Ok(())
}

pub fn cmd_te(config: &RunConfig) -> anyhow::Result<()> {
    let inputs = load_inputs(config)?;
    let mut reports = Vec::new();
    for model in &inputs.models {
        let mut report = ModelReport::new(model.meta().clone());
        te_part(model.as_ref(), &inputs.sets, config, &mut report)?;
        reports.push(report);
    }
    finish("te", config, &inputs, &reports)
}

pub fn cmd_nie(config: &RunConfig) -> anyhow::Result<()> {
    let inputs = load_inputs(config)?;
    std::fs::create_dir_all(&config.out)
        .with_context(|| format!("creating {}", config.out.display()))?;
    let mut reports = Vec::new();
    for model in &inputs.models {
        let mut report = ModelReport::new(model.meta().clone());
        let checkpoint = checkpoint_path(config, model.meta(), inputs.models.len());
        nie_part(
            model.as_ref(),
            &inputs.sets,
            config,
            &mut report,
            checkpoint,
        )?;
        reports.push(report);
    }
    finish("nie", config, &inputs, &reports)
}

pub fn cmd_report(config: &RunConfig) -> anyhow::Result<()> {
    let inputs = load_inputs(config)?;
    std::fs::create_dir_all(&config.out)
        .with_context(|| format!("creating {}", config.out.display()))?;
    let mut reports = Vec::new();
    for model in &inputs.models {
        let mut report = ModelReport::new(model.meta().clone());
        te_part(model.as_ref(), &inputs.sets, config, &mut report)?;
        report.accuracy = Some(group_accuracy(model.as_ref(), &inputs.sets)?);
        let checkpoint = checkpoint_path(config, model.meta(), inputs.models.len());
        nie_part(
            model.as_ref(),
            &inputs.sets,
            config,
            &mut report,
            checkpoint,
        )?;
        reports.push(report);
    }
    finish("report", config, &inputs, &reports)
}
