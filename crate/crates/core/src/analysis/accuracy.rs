use serde::{Deserialize, Serialize};

use crate::dataset::MatchedSet;
use crate::error::{Error, Result};
use crate::model::{NliClass, NliModel};

/// Percent correct per group. Control pairs are correct when the argmax is
/// entailment, intervention pairs when it is neutral or contradiction.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GroupAccuracy {
    pub control: f64,
    pub intervention: f64,
    pub n_control: usize,
    pub n_intervention: usize,
}

impl GroupAccuracy {
    /// `(control, intervention)` with two decimals.
    pub fn formatted(&self) -> (String, String) {
        (
            format!("{:.2}", self.control),
            format!("{:.2}", self.intervention),
        )
    }
}

pub fn group_accuracy<M: NliModel + ?Sized>(
    model: &M,
    sets: &[MatchedSet],
) -> Result<GroupAccuracy> {
    let mut control_hits = 0;
    let mut intervention_hits = 0;
    let mut n_intervention = 0;
    for set in sets {
        if model.predict(&set.control)?.argmax() == NliClass::Entailment {
            control_hits += 1;
        }
        for pair in &set.interventions {
            n_intervention += 1;
            if model.predict(pair)?.argmax() != NliClass::Entailment {
                intervention_hits += 1;
            }
        }
    }
    if sets.is_empty() || n_intervention == 0 {
        return Err(Error::InvalidArgument(
            "group accuracy needs non-empty control and intervention groups".into(),
        ));
    }
    Ok(GroupAccuracy {
        control: 100.0 * control_hits as f64 / sets.len() as f64,
        intervention: 100.0 * intervention_hits as f64 / n_intervention as f64,
        n_control: sets.len(),
        n_intervention,
    })
}
