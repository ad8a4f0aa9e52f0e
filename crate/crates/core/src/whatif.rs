//! Session-scoped label edits over the held-out fold and recomputation of
//! group and subgroup fairness under those edits.
//!
//! An [`EditOverlay`] stores only deltas against the base
//! [`OutcomeTable`]: writing back the original label removes the edit.
//! Prediction edits replace the recorded label and mark the row as
//! overridden; the model probability is left as it was.

use std::collections::BTreeMap;

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dataset::{Label, Target};
use crate::metrics::{
    group_metric, subgroup_metric, MetricError, MetricId, MetricResult, OutcomeTable,
};
use crate::model::PerformanceSummary;

#[derive(Debug, Error, PartialEq)]
pub enum WhatIfError {
    #[error("instance {0} is not in the held-out fold")]
    NotInActiveFold(u32),
    #[error("{0} is an individual-fairness metric; what-if covers group and subgroup metrics")]
    IndividualMetric(MetricId),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Edit {
    pub instance_id: u32,
    pub target: Target,
    pub new_value: Label,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EditOverlay {
    pub session_id: String,
    #[serde(with = "edit_list")]
    pub edits: BTreeMap<(u32, Target), Label>,
    pub created_at: DateTime<Utc>,
    pub updated_at: DateTime<Utc>,
}

/// Edits serialize as a list of [`Edit`] records.
mod edit_list {
    use super::*;
    use serde::{Deserializer, Serializer};

    pub fn serialize<S: Serializer>(
        edits: &BTreeMap<(u32, Target), Label>,
        s: S,
    ) -> Result<S::Ok, S::Error> {
        let list: Vec<Edit> = edits
            .iter()
            .map(|((id, target), v)| Edit {
                instance_id: *id,
                target: *target,
                new_value: *v,
            })
            .collect();
        list.serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(
        d: D,
    ) -> Result<BTreeMap<(u32, Target), Label>, D::Error> {
        let list = Vec::<Edit>::deserialize(d)?;
        Ok(list
            .into_iter()
            .map(|e| ((e.instance_id, e.target), e.new_value))
            .collect())
    }
}

impl EditOverlay {
    pub fn new(session_id: impl Into<String>) -> Self {
        let now = Utc::now();
        EditOverlay {
            session_id: session_id.into(),
            edits: BTreeMap::new(),
            created_at: now,
            updated_at: now,
        }
    }

    pub fn len(&self) -> usize {
        self.edits.len()
    }

    pub fn is_empty(&self) -> bool {
        self.edits.is_empty()
    }

    pub fn list(&self) -> Vec<Edit> {
        self.edits
            .iter()
            .map(|((id, target), v)| Edit {
                instance_id: *id,
                target: *target,
                new_value: *v,
            })
            .collect()
    }

    /// Records `target := value` for an instance. Writing the base value
    /// back drops the edit; a second write to the same slot replaces it.
    pub fn apply_edit(
        &mut self,
        base: &OutcomeTable,
        instance_id: u32,
        target: Target,
        value: Label,
    ) -> Result<(), WhatIfError> {
        let row = base
            .row(instance_id)
            .ok_or(WhatIfError::NotInActiveFold(instance_id))?;
        if row.label(target) == value {
            self.edits.remove(&(instance_id, target));
        } else {
            self.edits.insert((instance_id, target), value);
        }
        self.updated_at = Utc::now();
        Ok(())
    }

    pub fn remove_edit(&mut self, instance_id: u32, target: Target) -> bool {
        let removed = self.edits.remove(&(instance_id, target)).is_some();
        if removed {
            self.updated_at = Utc::now();
        }
        removed
    }

    pub fn clear(&mut self) {
        self.edits.clear();
        self.updated_at = Utc::now();
    }

    /// A copy of `base` with every edit applied.
    pub fn apply_to(&self, base: &OutcomeTable) -> OutcomeTable {
        let mut table = base.clone();
        for ((id, target), value) in &self.edits {
            if let Some(row) = table.row_mut(*id) {
                *row.label_mut(*target) = *value;
                if *target == Target::Prediction {
                    row.overridden = true;
                }
            }
        }
        table
    }
}

/// What to recompute.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "scope", rename_all = "snake_case")]
pub enum WhatIfQuery {
    Group {
        feature: String,
        metrics: Vec<MetricId>,
        #[serde(default)]
        condition: Option<String>,
    },
    Subgroup {
        features: Vec<String>,
        metrics: Vec<MetricId>,
        #[serde(default)]
        condition: Option<String>,
    },
}

/// Group or subgroup results under the overlay, one entry per requested
/// metric. Individual-fairness metrics are rejected up front.
pub fn recompute(
    base: &OutcomeTable,
    overlay: &EditOverlay,
    query: &WhatIfQuery,
) -> Result<Vec<Result<MetricResult, MetricError>>, WhatIfError> {
    let metrics = match query {
        WhatIfQuery::Group { metrics, .. } | WhatIfQuery::Subgroup { metrics, .. } => metrics,
    };
    if let Some(m) = metrics.iter().find(|m| m.is_individual()) {
        return Err(WhatIfError::IndividualMetric(*m));
    }
    let edited = overlay.apply_to(base);
    Ok(metrics
        .iter()
        .map(|m| match query {
            WhatIfQuery::Group {
                feature, condition, ..
            } => group_metric(&edited, *m, feature, condition.as_deref()).map(MetricResult::Group),
            WhatIfQuery::Subgroup {
                features,
                condition,
                ..
            } => {
                let names: Vec<&str> = features.iter().map(String::as_str).collect();
                subgroup_metric(&edited, *m, &names, condition.as_deref())
                    .map(MetricResult::Subgroup)
            }
        })
        .collect())
}

/// Accuracy figures over the overlaid labels.
pub fn hypothetical_performance(base: &OutcomeTable, overlay: &EditOverlay) -> PerformanceSummary {
    overlay.apply_to(base).performance()
}
