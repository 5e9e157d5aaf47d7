//! Neuron sweeps, top-k selection, layer-wise aggregation, group accuracy
//! and report emission.

pub mod accuracy;
pub mod layers;
pub mod report;
pub mod selection;
pub mod svg;
pub mod sweep;

pub use accuracy::{group_accuracy, GroupAccuracy};
pub use layers::{layer_depth, layerwise_nie, DepthGroup, LayerSummary, LayerwiseMode};
pub use report::{emit_report, ModelManifest, ModelReport, RunManifest, TTestRow};
pub use selection::{per_layer_count, top_k_selection};
pub use sweep::{neuron_sweep, sweep_fingerprint, NeuronEffectTable, NeuronEntry, SweepOptions};
