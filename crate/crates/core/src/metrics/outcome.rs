use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::{MetricError, Result};
use crate::dataset::{Dataset, Label, LegitimateFeatureSpec, ProtectedGroupSpec, Row, Target, Value};
use crate::model::{PerformanceSummary, PredictionRecord, TrainedModel};

/// One held-out instance as the metrics see it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Outcome {
    pub id: u32,
    pub ground_truth: Label,
    pub predicted: Label,
    pub probability_good: f64,
    /// Set when a what-if edit replaced the model's label; the probability
    /// still reflects the model.
    #[serde(default)]
    pub overridden: bool,
    pub groups: BTreeMap<String, bool>,
    /// Stratum of every legitimate feature.
    pub strata: BTreeMap<String, String>,
}

impl Outcome {
    pub fn label(&self, target: Target) -> Label {
        match target {
            Target::GroundTruth => self.ground_truth,
            Target::Prediction => self.predicted,
        }
    }

    pub fn label_mut(&mut self, target: Target) -> &mut Label {
        match target {
            Target::GroundTruth => &mut self.ground_truth,
            Target::Prediction => &mut self.predicted,
        }
    }
}

impl Row for Outcome {
    fn id(&self) -> u32 {
        self.id
    }

    fn field(&self, dataset: &Dataset, name: &str) -> Option<Value> {
        match name {
            "predicted" => Some(Value::Category(self.predicted.name().to_string())),
            "ground_truth" => Some(Value::Category(self.ground_truth.name().to_string())),
            "probability_good" => Some(Value::Number(self.probability_good)),
            _ => match self.groups.get(name) {
                Some(p) => Some(Value::Category(
                    if *p { "protected" } else { "unprotected" }.to_string(),
                )),
                None => dataset.instance(self.id)?.field(dataset, name),
            },
        }
    }

    fn label(&self, target: Target) -> Option<Label> {
        Some(Outcome::label(self, target))
    }

    fn extra_columns() -> &'static [&'static str] {
        &["predicted", "probability_good"]
    }
}

/// Ground truth, predictions and group columns of the exploration set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OutcomeTable {
    pub rows: Vec<Outcome>,
    pub group_specs: Vec<ProtectedGroupSpec>,
    pub legitimate_specs: Vec<LegitimateFeatureSpec>,
}

impl OutcomeTable {
    pub fn from_predictions(dataset: &Dataset, predictions: &[PredictionRecord]) -> Result<Self> {
        let rows = predictions
            .iter()
            .map(|p| {
                let inst = dataset
                    .instance(p.instance_id)
                    .ok_or(MetricError::UnknownInstance(p.instance_id))?;
                let strata = dataset
                    .legitimate_specs
                    .iter()
                    .filter_map(|spec| {
                        let v = inst.values.get(&spec.feature)?;
                        Some((spec.feature.clone(), spec.stratum_of(v)?))
                    })
                    .collect();
                Ok(Outcome {
                    id: inst.id,
                    ground_truth: inst.ground_truth,
                    predicted: p.predicted,
                    probability_good: p.probability_good,
                    overridden: false,
                    groups: inst.groups.clone(),
                    strata,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(OutcomeTable {
            rows,
            group_specs: dataset.protected_specs.clone(),
            legitimate_specs: dataset.legitimate_specs.clone(),
        })
    }

    /// Predictions of `model` over its held-out fold.
    pub fn for_model(model: &TrainedModel, dataset: &Dataset) -> Result<Self> {
        let predictions = model.predict_active(dataset)?;
        Self::from_predictions(dataset, &predictions)
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn row(&self, id: u32) -> Option<&Outcome> {
        self.rows.iter().find(|r| r.id == id)
    }

    pub fn row_mut(&mut self, id: u32) -> Option<&mut Outcome> {
        self.rows.iter_mut().find(|r| r.id == id)
    }

    pub fn group_spec(&self, feature: &str) -> Result<&ProtectedGroupSpec> {
        self.group_specs
            .iter()
            .find(|s| s.feature == feature)
            .or_else(|| self.group_specs.iter().find(|s| s.source == feature))
            .ok_or_else(|| MetricError::UnknownGroup(feature.to_string()))
    }

    pub fn legitimate_spec(&self, feature: &str) -> Result<&LegitimateFeatureSpec> {
        self.legitimate_specs
            .iter()
            .find(|s| s.feature == feature)
            .ok_or_else(|| MetricError::UnknownLegitimate(feature.to_string()))
    }

    pub fn performance(&self) -> PerformanceSummary {
        PerformanceSummary::from_pairs(self.rows.iter().map(|r| (r.ground_truth, r.predicted)))
    }
}
