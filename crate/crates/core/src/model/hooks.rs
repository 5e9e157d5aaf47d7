use crate::error::{Error, Result};
use crate::model::{ActivationCoord, ActivationSnapshot, Alignment, MediatorSpec, ModelMeta};

/// Per-forward-pass capture and patch state.
///
/// Implementations call [`LayerHooks::apply`] once per layer with that
/// layer's output laid out as `hidden[position][neuron]`, before the next
/// layer reads it.
#[derive(Debug, Default)]
pub struct LayerHooks<'a> {
    capture: Option<&'a [ActivationCoord]>,
    captured: Vec<Vec<f64>>,
    patch: Option<&'a ActivationSnapshot>,
    patch_len: usize,
}

impl<'a> LayerHooks<'a> {
    pub fn none() -> Self {
        Self::default()
    }

    pub fn capturing(meta: &ModelMeta, spec: &'a MediatorSpec, seq_len: usize) -> Result<Self> {
        spec.check_bounds(meta)?;
        Ok(Self {
            capture: Some(spec.coords()),
            captured: vec![vec![0.0; seq_len]; spec.coords().len()],
            ..Self::default()
        })
    }

    pub fn patching(
        meta: &ModelMeta,
        snapshot: &'a ActivationSnapshot,
        alignment: Alignment,
        seq_len: usize,
    ) -> Result<Self> {
        snapshot.validate()?;
        for c in &snapshot.coords {
            meta.check_coord(*c)?;
        }
        let patch_len = match alignment {
            Alignment::Strict if snapshot.seq_len != seq_len => {
                return Err(Error::AlignmentMismatch {
                    snapshot: snapshot.seq_len,
                    input: seq_len,
                })
            }
            Alignment::Strict => seq_len,
            Alignment::MinLength => snapshot.seq_len.min(seq_len),
        };
        Ok(Self {
            patch: Some(snapshot),
            patch_len,
            ..Self::default()
        })
    }

    pub fn apply(&mut self, layer: usize, hidden: &mut [Vec<f64>]) {
        if let Some(snap) = self.patch {
            for (coord, values) in snap.coords.iter().zip(&snap.values) {
                if coord.layer != layer {
                    continue;
                }
                for (pos, row) in hidden.iter_mut().enumerate().take(self.patch_len) {
                    row[coord.neuron] = values[pos];
                }
            }
        }
        if let Some(coords) = self.capture {
            for (coord, out) in coords.iter().zip(self.captured.iter_mut()) {
                if coord.layer != layer {
                    continue;
                }
                for (pos, row) in hidden.iter().enumerate() {
                    out[pos] = row[coord.neuron];
                }
            }
        }
    }

    pub fn into_snapshot(self, seq_len: usize) -> Option<ActivationSnapshot> {
        self.capture.map(|coords| ActivationSnapshot {
            coords: coords.to_vec(),
            values: self.captured,
            seq_len,
        })
    }
}
