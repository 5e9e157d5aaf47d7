//! Report bundle: CSV/JSON tables, SVG figures with sidecar CSVs, and the
//! run manifest.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::analysis::accuracy::GroupAccuracy;
use crate::analysis::layers::{LayerSummary, LayerwiseMode};
use crate::analysis::svg::{heat_strip, scatter, Point};
use crate::analysis::sweep::NeuronEffectTable;
use crate::effects::{
    write_text, EffectRecord, EffectRow, EffectSummary, Pooling, MASS_CONVENTION, ODDS_FLOOR,
};
use crate::error::{Error, Result};
use crate::model::{Alignment, CapabilityManifest, ModelMeta};
use crate::stats::{format_p_value, pearson_r, TTestResult};

/// Everything computed for one model.
#[derive(Debug, Clone)]
pub struct ModelReport {
    pub meta: ModelMeta,
    pub records: Vec<EffectRecord>,
    pub summary: Option<EffectSummary>,
    pub ttest: Option<TTestResult>,
    pub table: Option<NeuronEffectTable>,
    pub layers: Vec<LayerSummary>,
    pub accuracy: Option<GroupAccuracy>,
}

impl ModelReport {
    pub fn new(meta: ModelMeta) -> Self {
        Self {
            meta,
            records: Vec::new(),
            summary: None,
            ttest: None,
            table: None,
            layers: Vec::new(),
            accuracy: None,
        }
    }

    fn is_empty(&self) -> bool {
        self.records.is_empty()
            && self.ttest.is_none()
            && self.table.is_none()
            && self.layers.is_empty()
            && self.accuracy.is_none()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelManifest {
    #[serde(flatten)]
    pub capabilities: CapabilityManifest,
    pub n_parameters: u64,
    pub vocab_size: usize,
}

impl From<&ModelMeta> for ModelManifest {
    fn from(meta: &ModelMeta) -> Self {
        Self {
            capabilities: meta.capabilities(),
            n_parameters: meta.n_parameters,
            vocab_size: meta.vocab_size,
        }
    }
}

/// Provenance written next to every set of results. Contains no timestamps,
/// so equal runs produce equal manifests.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub tool_version: String,
    pub command: String,
    /// The effective configuration after merging flags, file and defaults.
    pub config: serde_json::Value,
    pub models: Vec<ModelManifest>,
    pub dataset_sha256: Option<String>,
    pub seed: u64,
    pub alignment: Alignment,
    pub pooling: Pooling,
    pub layerwise_mode: LayerwiseMode,
    pub topk_fraction: f64,
    pub clamp_count: usize,
    pub odds_floor: f64,
    pub mass_convention: String,
    pub outputs: Vec<String>,
}

impl RunManifest {
    pub fn new(command: &str, config: serde_json::Value) -> Self {
        Self {
            tool_version: env!("CARGO_PKG_VERSION").to_string(),
            command: command.to_string(),
            config,
            models: Vec::new(),
            dataset_sha256: None,
            seed: 0,
            alignment: Alignment::default(),
            pooling: Pooling::default(),
            layerwise_mode: LayerwiseMode::default(),
            topk_fraction: 0.01,
            clamp_count: 0,
            odds_floor: ODDS_FLOOR,
            mass_convention: MASS_CONVENTION.to_string(),
            outputs: Vec::new(),
        }
    }

    pub fn write(&self, dir: &Path) -> Result<PathBuf> {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let path = dir.join("run_manifest.json");
        let mut text = serde_json::to_string_pretty(self)?;
        text.push('\n');
        write_text(&path, &text)?;
        Ok(path)
    }
}

/// An [`EffectRow`] prefixed with the model name.
#[derive(Serialize)]
struct TeRow<'a> {
    model: &'a str,
    match_id: String,
    te: f64,
    nie: Option<f64>,
    nde: Option<f64>,
    y_null: f64,
    y_swap: f64,
    y_swap_m_null: Option<f64>,
    clamp_flags: String,
    mediator_layer: Option<usize>,
    mediator_neurons: String,
    alignment_mode: Option<Alignment>,
}

impl<'a> TeRow<'a> {
    fn new(model: &'a str, r: &EffectRecord) -> Self {
        let row = EffectRow::from(r);
        Self {
            model,
            match_id: row.match_id,
            te: row.te,
            nie: row.nie,
            nde: row.nde,
            y_null: row.y_null,
            y_swap: row.y_swap,
            y_swap_m_null: row.y_swap_m_null,
            clamp_flags: row.clamp_flags,
            mediator_layer: row.mediator_layer,
            mediator_neurons: row.mediator_neurons,
            alignment_mode: row.alignment_mode,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TTestRow {
    pub model: String,
    pub mean: f64,
    pub sd: f64,
    pub n: usize,
    pub t: f64,
    pub p: f64,
    pub p_display: String,
    pub alpha: f64,
    pub reject: bool,
    pub degenerate: bool,
}

impl TTestRow {
    pub fn new(model: &str, t: &TTestResult) -> Self {
        Self {
            model: model.to_string(),
            mean: t.mean,
            sd: t.sd,
            n: t.n,
            t: t.t_statistic,
            p: t.p_value_one_sided,
            p_display: format_p_value(t.p_value_one_sided),
            alpha: t.alpha,
            reject: t.reject_h0,
            degenerate: t.degenerate,
        }
    }
}

#[derive(Serialize)]
struct NeuronRow<'a> {
    model: &'a str,
    layer: usize,
    neuron: usize,
    mean_nie: f64,
    sd_nie: f64,
    n: usize,
}

#[derive(Serialize)]
struct LayerRow<'a> {
    model: &'a str,
    layer: usize,
    depth: f64,
    depth_group: &'static str,
    n_selected: usize,
    selected_coords: String,
    layerwise_mean_nie: f64,
    sd_nie: f64,
    n: usize,
    mode: &'static str,
}

#[derive(Serialize)]
struct AccuracyRow<'a> {
    model: &'a str,
    control_acc: String,
    intervention_acc: String,
    n_control: usize,
    n_intervention: usize,
}

#[derive(Serialize)]
struct ModelPointRow<'a> {
    model: &'a str,
    x: f64,
    mean_te: f64,
}

#[derive(Serialize)]
struct ScatterRow {
    layer: usize,
    neuron: usize,
    mean_nie: f64,
}

#[derive(Serialize)]
struct StripRow {
    layer: usize,
    depth: f64,
    layerwise_mean_nie: f64,
}

fn csv_string<T: Serialize>(rows: impl IntoIterator<Item = T>) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for r in rows {
        w.serialize(r)?;
    }
    let bytes = w
        .into_inner()
        .map_err(|e| Error::InvalidArgument(e.to_string()))?;
    Ok(String::from_utf8(bytes).expect("csv output is UTF-8"))
}

/// File-name-safe form of a model name.
pub fn slug(name: &str) -> String {
    let s: String = name
        .chars()
        .map(|c| {
            if c.is_ascii_alphanumeric() || c == '-' || c == '_' {
                c
            } else {
                '_'
            }
        })
        .collect();
    let s = s.trim_matches('_').to_string();
    if s.is_empty() {
        "model".into()
    } else {
        s
    }
}

struct Writer<'a> {
    dir: &'a Path,
    written: Vec<String>,
}

impl Writer<'_> {
    fn put(&mut self, rel: &str, text: &str) -> Result<()> {
        let path = self.dir.join(rel);
        if let Some(parent) = path.parent() {
            fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
        }
        write_text(&path, text)?;
        self.written.push(rel.to_string());
        Ok(())
    }
}

/// Writes every output the inputs support and the manifest listing them.
/// Returns the relative paths written, manifest last.
pub fn emit_report(
    models: &[ModelReport],
    manifest: &RunManifest,
    out_dir: &Path,
) -> Result<Vec<String>> {
    if models.iter().all(ModelReport::is_empty) {
        return Err(Error::InvalidArgument(
            "nothing to report: no records, tables or summaries".into(),
        ));
    }
    fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
    let mut w = Writer {
        dir: out_dir,
        written: Vec::new(),
    };

    let with_records: Vec<&ModelReport> = models.iter().filter(|m| !m.records.is_empty()).collect();
    if !with_records.is_empty() {
        let rows = with_records
            .iter()
            .flat_map(|m| m.records.iter().map(|r| TeRow::new(&m.meta.name, r)));
        w.put("te_table.csv", &csv_string(rows)?)?;
        let mut jsonl = String::new();
        for m in &with_records {
            for r in &m.records {
                jsonl.push_str(&serde_json::to_string(&TeRow::new(&m.meta.name, r))?);
                jsonl.push('\n');
            }
        }
        w.put("te_records.jsonl", &jsonl)?;
    }

    let ttests: Vec<TTestRow> = models
        .iter()
        .filter_map(|m| m.ttest.as_ref().map(|t| TTestRow::new(&m.meta.name, t)))
        .collect();
    if !ttests.is_empty() {
        w.put("ttest.csv", &csv_string(&ttests)?)?;
        w.put(
            "ttest.json",
            &(serde_json::to_string_pretty(&ttests)? + "\n"),
        )?;
    }

    let tables: Vec<(&ModelReport, &NeuronEffectTable)> = models
        .iter()
        .filter_map(|m| m.table.as_ref().map(|t| (m, t)))
        .collect();
    if !tables.is_empty() {
        let rows = tables.iter().flat_map(|(m, t)| {
            t.entries.iter().map(|e| NeuronRow {
                model: &m.meta.name,
                layer: e.coord.layer,
                neuron: e.coord.neuron,
                mean_nie: e.mean_nie,
                sd_nie: e.sd_nie,
                n: e.n,
            })
        });
        w.put("neuron_nie.csv", &csv_string(rows)?)?;
        for (m, t) in &tables {
            let name = format!("figures/neuron_nie_{}", slug(&m.meta.name));
            let points: Vec<Point> = t
                .entries
                .iter()
                .map(|e| Point {
                    x: e.coord.neuron as f64,
                    y: e.mean_nie,
                    series: e.coord.layer,
                    label: None,
                })
                .collect();
            let title = format!("Neuron-wise NIE, {}", m.meta.name);
            w.put(
                &format!("{name}.svg"),
                &scatter(&title, "neuron index", "mean NIE", &points, None),
            )?;
            let rows = t.entries.iter().map(|e| ScatterRow {
                layer: e.coord.layer,
                neuron: e.coord.neuron,
                mean_nie: e.mean_nie,
            });
            w.put(&format!("{name}.csv"), &csv_string(rows)?)?;
        }
    }

    let layered: Vec<&ModelReport> = models.iter().filter(|m| !m.layers.is_empty()).collect();
    if !layered.is_empty() {
        let rows = layered.iter().flat_map(|m| {
            m.layers.iter().map(|l| LayerRow {
                model: &m.meta.name,
                layer: l.layer,
                depth: l.depth,
                depth_group: l.depth_group.as_str(),
                n_selected: l.selected_coords.len(),
                selected_coords: l
                    .selected_coords
                    .iter()
                    .map(|c| c.to_string())
                    .collect::<Vec<_>>()
                    .join(";"),
                layerwise_mean_nie: l.layerwise_mean_nie,
                sd_nie: l.sd_nie,
                n: l.n,
                mode: l.mode.as_str(),
            })
        });
        w.put("layer_nie.csv", &csv_string(rows)?)?;
        for m in &layered {
            let name = format!("figures/layer_nie_{}", slug(&m.meta.name));
            let cells: Vec<(String, f64)> = m
                .layers
                .iter()
                .map(|l| (l.layer.to_string(), l.layerwise_mean_nie))
                .collect();
            w.put(
                &format!("{name}.svg"),
                &heat_strip(&format!("Layer-wise NIE, {}", m.meta.name), &cells),
            )?;
            let rows = m.layers.iter().map(|l| StripRow {
                layer: l.layer,
                depth: l.depth,
                layerwise_mean_nie: l.layerwise_mean_nie,
            });
            w.put(&format!("{name}.csv"), &csv_string(rows)?)?;
        }
    }

    let accuracies: Vec<AccuracyRow> = models
        .iter()
        .filter_map(|m| {
            m.accuracy.map(|a| {
                let (control_acc, intervention_acc) = a.formatted();
                AccuracyRow {
                    model: &m.meta.name,
                    control_acc,
                    intervention_acc,
                    n_control: a.n_control,
                    n_intervention: a.n_intervention,
                }
            })
        })
        .collect();
    if !accuracies.is_empty() {
        w.put("accuracy.csv", &csv_string(accuracies)?)?;
    }

    let summarized: Vec<(&ModelReport, f64)> = models
        .iter()
        .filter_map(|m| m.summary.as_ref().map(|s| (m, s.te.mean)))
        .collect();
    if !summarized.is_empty() {
        let axes: [(&str, &str, fn(&ModelMeta) -> f64); 2] = [
            ("te_vs_params", "parameters", |m| m.n_parameters as f64),
            ("te_vs_vocab", "vocabulary size", |m| m.vocab_size as f64),
        ];
        for (name, x_label, x_of) in axes {
            let points: Vec<Point> = summarized
                .iter()
                .enumerate()
                .map(|(i, (m, te))| Point {
                    x: x_of(&m.meta),
                    y: *te,
                    series: i,
                    label: Some(m.meta.name.clone()),
                })
                .collect();
            let xs: Vec<f64> = points.iter().map(|p| p.x).collect();
            let ys: Vec<f64> = points.iter().map(|p| p.y).collect();
            let note = pearson_r(&xs, &ys).ok().map(|r| format!("r = {r:.3}"));
            let title = format!("Mean TE vs {x_label}");
            w.put(
                &format!("figures/{name}.svg"),
                &scatter(&title, x_label, "mean TE", &points, note.as_deref()),
            )?;
            let rows = summarized.iter().map(|(m, te)| ModelPointRow {
                model: &m.meta.name,
                x: x_of(&m.meta),
                mean_te: *te,
            });
            w.put(&format!("figures/{name}.csv"), &csv_string(rows)?)?;
        }
    }

    let mut manifest = manifest.clone();
    manifest.clamp_count = models
        .iter()
        .flat_map(|m| &m.records)
        .filter(|r| r.is_clamped())
        .count();
    if manifest.models.is_empty() {
        manifest.models = models
            .iter()
            .map(|m| ModelManifest::from(&m.meta))
            .collect();
    }
    manifest.outputs = w.written.clone();
    manifest.write(out_dir)?;
    w.written.push("run_manifest.json".into());
    Ok(w.written)
}
