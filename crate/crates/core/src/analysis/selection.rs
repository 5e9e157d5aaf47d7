use std::collections::BTreeMap;

use crate::analysis::sweep::{NeuronEffectTable, NeuronEntry};
use crate::error::{Error, Result};
use crate::model::ActivationCoord;

/// Coordinates per layer for a fraction of `hidden_size`: the ceiling,
/// at least 1. A 1e-9 slack keeps products like `0.07 * 100` from rounding
/// up to the next integer.
pub fn per_layer_count(fraction: f64, hidden_size: usize) -> Result<usize> {
    if !(fraction > 0.0 && fraction <= 1.0) {
        return Err(Error::InvalidArgument(format!(
            "top-k fraction must lie in (0, 1], got {fraction}"
        )));
    }
    let k = (fraction * hidden_size as f64 - 1e-9).ceil() as usize;
    Ok(k.clamp(1, hidden_size.max(1)))
}

/// Per layer, the coordinates with the highest signed mean NIE, ties broken
/// by lower neuron index. Layers only partially present in the table select
/// among the coordinates they have.
pub fn top_k_selection(
    table: &NeuronEffectTable,
    fraction: f64,
) -> Result<BTreeMap<usize, Vec<ActivationCoord>>> {
    if table.entries.is_empty() {
        return Err(Error::InvalidArgument(
            "cannot select from an empty neuron table".into(),
        ));
    }
    let k = per_layer_count(fraction, table.hidden_size)?;
    let mut by_layer: BTreeMap<usize, Vec<&NeuronEntry>> = BTreeMap::new();
    for e in &table.entries {
        by_layer.entry(e.coord.layer).or_default().push(e);
    }
    Ok(by_layer
        .into_iter()
        .map(|(layer, mut entries)| {
            entries.sort_by(|a, b| {
                b.mean_nie
                    .total_cmp(&a.mean_nie)
                    .then(a.coord.neuron.cmp(&b.coord.neuron))
            });
            (layer, entries.iter().take(k).map(|e| e.coord).collect())
        })
        .collect())
}
