use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::dataset::MatchedSet;
use crate::effects::{nie_records, MeanSd};
use crate::error::{Error, Result};
use crate::model::{ActivationCoord, Alignment, MediatorSpec, NliModel};

pub const EARLY_END: f64 = 0.33;
pub const MIDDLE_END: f64 = 0.67;

/// Layer index over layer count.
pub fn layer_depth(layer: usize, n_layers: usize) -> f64 {
    layer as f64 / n_layers as f64
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DepthGroup {
    /// `[0, 0.33)`
    Early,
    /// `[0.33, 0.67)`
    Middle,
    /// `[0.67, 1]`
    Final,
}

impl DepthGroup {
    pub fn of(depth: f64) -> Self {
        if depth < EARLY_END {
            DepthGroup::Early
        } else if depth < MIDDLE_END {
            DepthGroup::Middle
        } else {
            DepthGroup::Final
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            DepthGroup::Early => "early",
            DepthGroup::Middle => "middle",
            DepthGroup::Final => "final",
        }
    }
}

impl fmt::Display for DepthGroup {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// How a layer's selected coordinates are combined.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LayerwiseMode {
    /// All selected coordinates patched together in one forward pass.
    #[default]
    Joint,
    /// Sum of the coordinates' individual mean NIEs.
    SumOfIndividual,
}

impl LayerwiseMode {
    pub fn as_str(self) -> &'static str {
        match self {
            LayerwiseMode::Joint => "joint",
            LayerwiseMode::SumOfIndividual => "sum_of_individual",
        }
    }
}

impl FromStr for LayerwiseMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "joint" => Ok(LayerwiseMode::Joint),
            "sum_of_individual" | "sum-of-individual" | "sum" => Ok(LayerwiseMode::SumOfIndividual),
            other => Err(Error::InvalidArgument(format!(
                "unknown layer-wise mode {other:?}, expected joint or sum_of_individual"
            ))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LayerSummary {
    pub layer: usize,
    pub depth: f64,
    pub depth_group: DepthGroup,
    pub selected_coords: Vec<ActivationCoord>,
    pub layerwise_mean_nie: f64,
    /// Sample sd of the per-pair values; 0 in sum-of-individual mode.
    pub sd_nie: f64,
    pub n: usize,
    pub mode: LayerwiseMode,
}

/// NIE of each layer's selected coordinates.
pub fn layerwise_nie<M: NliModel + ?Sized>(
    model: &M,
    sets: &[MatchedSet],
    selection: &BTreeMap<usize, Vec<ActivationCoord>>,
    alignment: Alignment,
    mode: LayerwiseMode,
    jobs: usize,
) -> Result<Vec<LayerSummary>> {
    if selection.is_empty() || selection.values().all(Vec::is_empty) {
        return Err(Error::InvalidArgument("layer selection is empty".into()));
    }
    let n_layers = model.meta().n_layers;
    let mut out = Vec::with_capacity(selection.len());
    for (&layer, coords) in selection {
        if coords.is_empty() {
            continue;
        }
        if let Some(c) = coords.iter().find(|c| c.layer != layer) {
            return Err(Error::StraddlingLayers { layer, coord: *c });
        }
        let (mean, sd, n) = match mode {
            LayerwiseMode::Joint => {
                let spec = MediatorSpec::new(coords.clone())?;
                let nie: Vec<f64> = nie_records(model, sets, &spec, alignment, jobs)?
                    .iter()
                    .map(|r| r.nie.expect("full record"))
                    .collect();
                let s = MeanSd::of(&nie).ok_or_else(|| {
                    Error::InvalidArgument("layer-wise NIE needs a non-empty dataset".into())
                })?;
                (s.mean, s.sd, nie.len())
            }
            LayerwiseMode::SumOfIndividual => {
                let mut total = 0.0;
                let mut n = 0;
                for c in coords {
                    let nie: Vec<f64> =
                        nie_records(model, sets, &MediatorSpec::single(*c), alignment, jobs)?
                            .iter()
                            .map(|r| r.nie.expect("full record"))
                            .collect();
                    n = nie.len();
                    total += MeanSd::of(&nie)
                        .ok_or_else(|| {
                            Error::InvalidArgument(
                                "layer-wise NIE needs a non-empty dataset".into(),
                            )
                        })?
                        .mean;
                }
                (total, 0.0, n)
            }
        };
        let depth = layer_depth(layer, n_layers);
        out.push(LayerSummary {
            layer,
            depth,
            depth_group: DepthGroup::of(depth),
            selected_coords: coords.clone(),
            layerwise_mean_nie: mean,
            sd_nie: sd,
            n,
            mode,
        });
    }
    Ok(out)
}
