//! Logistic-regression credit classifier with stratified k-fold splitting.
//!
//! The model is trained on every fold except the active one; the active
//! (held-out) fold is the exploration set for all fairness views.

use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dataset::{Dataset, Instance, Label, Value};

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("invalid model config: {0}")]
    InvalidConfig(String),
    #[error("empty dataset")]
    EmptyDataset,
    #[error("instance {id}: cannot encode `{feature}`: {reason}")]
    Unencodable {
        id: u32,
        feature: String,
        reason: String,
    },
    #[error("model was trained on dataset {expected}, got {found}")]
    DatasetMismatch { expected: String, found: String },
    #[error("instance {0} is not in the model's fold assignment")]
    UnknownInstance(u32),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T, E = ModelError> = std::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ModelConfig {
    pub learning_rate: f64,
    pub epochs: usize,
    pub l2_penalty: f64,
    pub seed: u64,
    pub folds: usize,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            learning_rate: 0.1,
            epochs: 2000,
            l2_penalty: 1e-3,
            seed: 42,
            folds: 5,
        }
    }
}

impl ModelConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate.is_finite() && self.learning_rate > 0.0) {
            return Err(ModelError::InvalidConfig(
                "learning_rate must be positive".into(),
            ));
        }
        if self.epochs == 0 {
            return Err(ModelError::InvalidConfig("epochs must be positive".into()));
        }
        if !(self.l2_penalty.is_finite() && self.l2_penalty >= 0.0) {
            return Err(ModelError::InvalidConfig(
                "l2_penalty must be non-negative".into(),
            ));
        }
        if self.folds < 2 {
            return Err(ModelError::InvalidConfig("folds must be at least 2".into()));
        }
        Ok(())
    }
}

/// One column of the encoded design matrix.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ColumnEncoder {
    /// 1.0 when `feature == category`.
    OneHot {
        feature: String,
        category: String,
        label: String,
    },
    /// `(x - min) / (max - min)`, fitted on the training folds.
    MinMax { feature: String, min: f64, max: f64 },
    /// 1.0 when the instance is in the protected group of `feature`.
    Group { feature: String, label: String },
}

impl ColumnEncoder {
    pub fn feature(&self) -> &str {
        match self {
            ColumnEncoder::OneHot { feature, .. }
            | ColumnEncoder::MinMax { feature, .. }
            | ColumnEncoder::Group { feature, .. } => feature,
        }
    }

    pub fn name(&self) -> String {
        match self {
            ColumnEncoder::OneHot {
                feature, category, ..
            } => format!("{feature}={category}"),
            ColumnEncoder::MinMax { feature, .. } | ColumnEncoder::Group { feature, .. } => {
                feature.clone()
            }
        }
    }

    pub fn display_name(&self) -> String {
        match self {
            ColumnEncoder::OneHot { feature, label, .. } => format!("{feature}: {label}"),
            ColumnEncoder::MinMax { feature, .. } => feature.clone(),
            ColumnEncoder::Group { feature, label } => format!("{feature}: {label}"),
        }
    }

    fn encode(&self, inst: &Instance) -> Result<f64> {
        let fail = |reason: &str| ModelError::Unencodable {
            id: inst.id,
            feature: self.feature().to_string(),
            reason: reason.to_string(),
        };
        match self {
            ColumnEncoder::OneHot {
                feature, category, ..
            } => match inst.values.get(feature) {
                Some(Value::Category(c)) => Ok(if c == category { 1.0 } else { 0.0 }),
                Some(Value::Number(_)) => Err(fail("expected a category code")),
                None => Err(fail("missing value")),
            },
            ColumnEncoder::MinMax { feature, min, max } => {
                let x = inst
                    .values
                    .get(feature)
                    .ok_or_else(|| fail("missing value"))?
                    .as_number()
                    .ok_or_else(|| fail("expected a number"))?;
                let span = max - min;
                Ok(if span > 0.0 { (x - min) / span } else { 0.0 })
            }
            ColumnEncoder::Group { feature, .. } => inst
                .is_protected(feature)
                .map(|p| if p { 1.0 } else { 0.0 })
                .ok_or_else(|| fail("missing group column")),
        }
    }
}

/// Ordered column encoders. Raw attributes that a protected group is derived
/// from are replaced by the binary group column.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Encoding {
    pub columns: Vec<ColumnEncoder>,
}

impl Encoding {
    pub fn fit(dataset: &Dataset, train_ids: &[u32]) -> Encoding {
        let sources: Vec<&str> = dataset
            .protected_specs
            .iter()
            .map(|s| s.source.as_str())
            .collect();
        let mut columns = Vec::new();
        for spec in &dataset.schema {
            if sources.contains(&spec.name.as_str()) {
                continue;
            }
            if spec.is_categorical() {
                for code in &spec.categories {
                    columns.push(ColumnEncoder::OneHot {
                        feature: spec.name.clone(),
                        category: code.clone(),
                        label: spec.display(code),
                    });
                }
            } else {
                let (mut min, mut max) = (f64::INFINITY, f64::NEG_INFINITY);
                for id in train_ids {
                    if let Some(x) = dataset
                        .instance(*id)
                        .and_then(|i| i.values.get(&spec.name))
                        .and_then(Value::as_number)
                    {
                        min = min.min(x);
                        max = max.max(x);
                    }
                }
                if !min.is_finite() {
                    (min, max) = (0.0, 0.0);
                }
                columns.push(ColumnEncoder::MinMax {
                    feature: spec.name.clone(),
                    min,
                    max,
                });
            }
        }
        for spec in &dataset.protected_specs {
            columns.push(ColumnEncoder::Group {
                feature: spec.feature.clone(),
                label: spec.protected_label.clone(),
            });
        }
        Encoding { columns }
    }

    pub fn len(&self) -> usize {
        self.columns.len()
    }

    pub fn is_empty(&self) -> bool {
        self.columns.is_empty()
    }

    pub fn encode(&self, inst: &Instance) -> Result<Vec<f64>> {
        self.columns.iter().map(|c| c.encode(inst)).collect()
    }

    /// Indices of the columns encoding `feature`.
    pub fn columns_of(&self, feature: &str) -> Vec<usize> {
        self.columns
            .iter()
            .enumerate()
            .filter(|(_, c)| c.feature() == feature)
            .map(|(i, _)| i)
            .collect()
    }

    /// Index of the binary group column for `feature`, if the model has one.
    pub fn group_column(&self, feature: &str) -> Option<usize> {
        self.columns
            .iter()
            .position(|c| matches!(c, ColumnEncoder::Group { feature: f, .. } if f == feature))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ColumnWeight {
    pub column: String,
    pub weight: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainedModel {
    pub config: ModelConfig,
    pub dataset_fingerprint: String,
    pub encoding: Encoding,
    /// Aligned with `encoding.columns`.
    pub weights: Vec<ColumnWeight>,
    pub bias: f64,
    pub fold_assignment: BTreeMap<u32, usize>,
    pub active_fold: usize,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub warnings: Vec<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PredictionRecord {
    pub instance_id: u32,
    pub predicted: Label,
    pub probability_good: f64,
    pub probability_bad: f64,
}

impl PredictionRecord {
    pub fn from_probability(instance_id: u32, probability_good: f64) -> Self {
        PredictionRecord {
            instance_id,
            predicted: label_for(probability_good),
            probability_good,
            probability_bad: 1.0 - probability_good,
        }
    }
}

/// Decision rule: Good iff `p >= 0.5`.
pub fn label_for(probability_good: f64) -> Label {
    Label::from_bool(probability_good >= 0.5)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PerformanceSummary {
    pub overall_accuracy: f64,
    /// Recall on Good; absent when the fold has no Good instances.
    pub accuracy_good: Option<f64>,
    pub accuracy_bad: Option<f64>,
    pub test_size: usize,
}

impl PerformanceSummary {
    /// Accuracy figures from `(ground truth, prediction)` pairs.
    pub fn from_pairs(pairs: impl IntoIterator<Item = (Label, Label)>) -> Self {
        let (mut n, mut correct) = (0usize, 0usize);
        let mut per_class = [(0usize, 0usize); 2];
        for (truth, pred) in pairs {
            n += 1;
            let slot = &mut per_class[truth as usize];
            slot.1 += 1;
            if truth == pred {
                correct += 1;
                slot.0 += 1;
            }
        }
        let ratio = |(hit, total): (usize, usize)| (total > 0).then(|| hit as f64 / total as f64);
        PerformanceSummary {
            overall_accuracy: if n == 0 { 0.0 } else { correct as f64 / n as f64 },
            accuracy_good: ratio(per_class[Label::Good as usize]),
            accuracy_bad: ratio(per_class[Label::Bad as usize]),
            test_size: n,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Sign {
    Positive,
    Negative,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureWeight {
    pub feature: String,
    pub column: String,
    pub weight: f64,
    pub sign: Sign,
}

pub fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

fn dot(w: &[f64], x: &[f64]) -> f64 {
    w.iter().zip(x).map(|(a, b)| a * b).sum()
}

/// Mean cross-entropy plus `l2 / 2 * ||w||^2` (bias unpenalized).
pub fn logistic_loss(weights: &[f64], bias: f64, xs: &[Vec<f64>], ys: &[f64], l2: f64) -> f64 {
    let n = xs.len() as f64;
    let data: f64 = xs
        .iter()
        .zip(ys)
        .map(|(x, y)| {
            let z = dot(weights, x) + bias;
            // log(1 + e^z) - y z, computed stably
            let softplus = if z > 0.0 {
                z + (-z).exp().ln_1p()
            } else {
                z.exp().ln_1p()
            };
            softplus - y * z
        })
        .sum::<f64>()
        / n;
    data + 0.5 * l2 * weights.iter().map(|w| w * w).sum::<f64>()
}

/// Analytic gradient of [`logistic_loss`] with respect to `(weights, bias)`.
pub fn logistic_gradient(
    weights: &[f64],
    bias: f64,
    xs: &[Vec<f64>],
    ys: &[f64],
    l2: f64,
) -> (Vec<f64>, f64) {
    let n = xs.len() as f64;
    let mut gw = vec![0.0; weights.len()];
    let mut gb = 0.0;
    for (x, y) in xs.iter().zip(ys) {
        let err = sigmoid(dot(weights, x) + bias) - y;
        for (g, xi) in gw.iter_mut().zip(x) {
            *g += err * xi;
        }
        gb += err;
    }
    for (g, w) in gw.iter_mut().zip(weights) {
        *g = *g / n + l2 * w;
    }
    (gw, gb / n)
}

/// Full-batch gradient descent from zero weights.
pub fn fit_logistic(xs: &[Vec<f64>], ys: &[f64], config: &ModelConfig) -> (Vec<f64>, f64) {
    let dim = xs.first().map_or(0, Vec::len);
    let mut w = vec![0.0; dim];
    let mut b = 0.0;
    if xs.is_empty() {
        return (w, b);
    }
    for _ in 0..config.epochs {
        let (gw, gb) = logistic_gradient(&w, b, xs, ys, config.l2_penalty);
        for (wi, gi) in w.iter_mut().zip(&gw) {
            *wi -= config.learning_rate * gi;
        }
        b -= config.learning_rate * gb;
    }
    (w, b)
}

/// Stratified fold assignment: each class is shuffled with the seed, then
/// the concatenated class lists are dealt round-robin over the folds, so
/// fold sizes differ by at most one.
pub fn stratified_folds(dataset: &Dataset, folds: usize, seed: u64) -> BTreeMap<u32, usize> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = BTreeMap::new();
    let mut cursor = 0usize;
    for class in [Label::Good, Label::Bad] {
        let mut ids: Vec<u32> = dataset
            .instances
            .iter()
            .filter(|i| i.ground_truth == class)
            .map(|i| i.id)
            .collect();
        ids.shuffle(&mut rng);
        for id in ids {
            out.insert(id, cursor % folds);
            cursor += 1;
        }
    }
    out
}

/// Fold index used as the held-out exploration set.
pub const ACTIVE_FOLD: usize = 0;

pub fn train(dataset: &Dataset, config: &ModelConfig) -> Result<TrainedModel> {
    config.validate()?;
    if dataset.is_empty() {
        return Err(ModelError::EmptyDataset);
    }
    let fold_assignment = stratified_folds(dataset, config.folds, config.seed);
    let train_ids: Vec<u32> = fold_assignment
        .iter()
        .filter(|(_, f)| **f != ACTIVE_FOLD)
        .map(|(id, _)| *id)
        .collect();
    let encoding = Encoding::fit(dataset, &train_ids);

    let mut xs = Vec::with_capacity(train_ids.len());
    let mut ys = Vec::with_capacity(train_ids.len());
    for id in &train_ids {
        let inst = dataset.instance(*id).ok_or(ModelError::UnknownInstance(*id))?;
        xs.push(encoding.encode(inst)?);
        ys.push(inst.ground_truth.as_f64());
    }

    let mut warnings = Vec::new();
    for fold in 0..config.folds {
        let labels: Vec<Label> = fold_assignment
            .iter()
            .filter(|(_, f)| **f == fold)
            .map(|(id, _)| dataset.instances[*id as usize - 1].ground_truth)
            .collect();
        if labels.windows(2).all(|w| w[0] == w[1]) {
            warnings.push(format!("fold {fold} contains a single class"));
        }
    }

    let (w, bias) = fit_logistic(&xs, &ys, config);
    let weights = encoding
        .columns
        .iter()
        .zip(w)
        .map(|(c, weight)| ColumnWeight {
            column: c.name(),
            weight,
        })
        .collect();
    Ok(TrainedModel {
        config: config.clone(),
        dataset_fingerprint: dataset.fingerprint(),
        encoding,
        weights,
        bias,
        fold_assignment,
        active_fold: ACTIVE_FOLD,
        warnings,
    })
}

impl TrainedModel {
    pub fn weight_vector(&self) -> Vec<f64> {
        self.weights.iter().map(|w| w.weight).collect()
    }

    pub fn probability(&self, encoded: &[f64]) -> f64 {
        let z: f64 = self
            .weights
            .iter()
            .zip(encoded)
            .map(|(w, x)| w.weight * x)
            .sum::<f64>()
            + self.bias;
        sigmoid(z)
    }

    pub fn predict(&self, inst: &Instance) -> Result<PredictionRecord> {
        let x = self.encoding.encode(inst)?;
        Ok(PredictionRecord::from_probability(inst.id, self.probability(&x)))
    }

    /// Held-out ids in ascending order.
    pub fn active_ids(&self) -> Vec<u32> {
        self.fold_assignment
            .iter()
            .filter(|(_, f)| **f == self.active_fold)
            .map(|(id, _)| *id)
            .collect()
    }

    pub fn is_active(&self, id: u32) -> bool {
        self.fold_assignment.get(&id) == Some(&self.active_fold)
    }

    pub fn check_dataset(&self, dataset: &Dataset) -> Result<()> {
        let found = dataset.fingerprint();
        if found != self.dataset_fingerprint {
            return Err(ModelError::DatasetMismatch {
                expected: self.dataset_fingerprint.clone(),
                found,
            });
        }
        Ok(())
    }

    pub fn active_instances<'d>(&self, dataset: &'d Dataset) -> Result<Vec<&'d Instance>> {
        self.active_ids()
            .into_iter()
            .map(|id| dataset.instance(id).ok_or(ModelError::UnknownInstance(id)))
            .collect()
    }

    pub fn predict_active(&self, dataset: &Dataset) -> Result<Vec<PredictionRecord>> {
        self.active_instances(dataset)?
            .into_iter()
            .map(|inst| self.predict(inst))
            .collect()
    }

    pub fn evaluate(&self, dataset: &Dataset) -> Result<PerformanceSummary> {
        let predictions = self.predict_active(dataset)?;
        Ok(PerformanceSummary::from_pairs(predictions.iter().map(|p| {
            (
                dataset.instances[p.instance_id as usize - 1].ground_truth,
                p.predicted,
            )
        })))
    }

    /// Weights sorted by magnitude, largest first; equal magnitudes keep
    /// encoding order.
    pub fn feature_weights(&self) -> Vec<FeatureWeight> {
        let mut out: Vec<FeatureWeight> = self
            .encoding
            .columns
            .iter()
            .zip(&self.weights)
            .map(|(c, w)| FeatureWeight {
                feature: c.display_name(),
                column: w.column.clone(),
                weight: w.weight,
                sign: if w.weight < 0.0 {
                    Sign::Negative
                } else {
                    Sign::Positive
                },
            })
            .collect();
        out.sort_by(|a, b| b.weight.abs().total_cmp(&a.weight.abs()));
        out
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("model serializes")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let model: TrainedModel = serde_json::from_str(text)?;
        if model.weights.len() != model.encoding.len() {
            return Err(ModelError::InvalidConfig(format!(
                "{} weights for {} encoded columns",
                model.weights.len(),
                model.encoding.len()
            )));
        }
        Ok(model)
    }
}

#[cfg(test)]
pub(crate) mod tests {
    use super::*;
    use crate::german;

    /// A model with explicit weights over an encoding, for hand-checked tests.
    pub(crate) fn fixed_model(encoding: Encoding, weights: &[f64], bias: f64) -> TrainedModel {
        TrainedModel {
            config: ModelConfig::default(),
            dataset_fingerprint: String::new(),
            weights: encoding
                .columns
                .iter()
                .zip(weights)
                .map(|(c, w)| ColumnWeight {
                    column: c.name(),
                    weight: *w,
                })
                .collect(),
            encoding,
            bias,
            fold_assignment: BTreeMap::new(),
            active_fold: 0,
            warnings: vec![],
        }
    }

    fn toy_xy() -> (Vec<Vec<f64>>, Vec<f64>) {
        let xs: Vec<Vec<f64>> = (0..10)
            .map(|i| vec![i as f64 / 9.0, ((i * 7) % 10) as f64 / 10.0])
            .collect();
        let ys = (0..10).map(|i| if i >= 5 { 1.0 } else { 0.0 }).collect();
        (xs, ys)
    }

    #[test]
    fn sigmoid_reference_values() {
        assert_eq!(sigmoid(0.0), 0.5);
        assert!((sigmoid(1.0) - 0.731_058_578_630_004_9).abs() < 1e-15);
        assert!(sigmoid(-800.0) >= 0.0 && sigmoid(800.0) <= 1.0);
    }

    #[test]
    fn gradient_matches_central_differences() {
        let (xs, ys) = toy_xy();
        let w = vec![0.3, -0.7];
        let b = 0.1;
        let l2 = 1e-2;
        let (gw, gb) = logistic_gradient(&w, b, &xs, &ys, l2);
        let h = 1e-6;
        for j in 0..w.len() {
            let mut plus = w.clone();
            let mut minus = w.clone();
            plus[j] += h;
            minus[j] -= h;
            let fd = (logistic_loss(&plus, b, &xs, &ys, l2) - logistic_loss(&minus, b, &xs, &ys, l2))
                / (2.0 * h);
            assert!((fd - gw[j]).abs() / gw[j].abs().max(1e-12) < 1e-4, "w{j}");
        }
        let fd = (logistic_loss(&w, b + h, &xs, &ys, l2) - logistic_loss(&w, b - h, &xs, &ys, l2))
            / (2.0 * h);
        assert!((fd - gb).abs() / gb.abs().max(1e-12) < 1e-4);
    }

    #[test]
    fn separable_toy_reaches_full_training_accuracy() {
        let (xs, ys) = toy_xy();
        let config = ModelConfig {
            learning_rate: 1.0,
            epochs: 5000,
            l2_penalty: 0.0,
            ..ModelConfig::default()
        };
        let (w, b) = fit_logistic(&xs, &ys, &config);
        for (x, y) in xs.iter().zip(&ys) {
            let p = sigmoid(dot(&w, x) + b);
            assert_eq!(label_for(p).as_f64(), *y);
        }
    }

    #[test]
    fn tie_goes_to_good() {
        let p = PredictionRecord::from_probability(1, 0.5);
        assert_eq!(p.predicted, Label::Good);
        assert_eq!(p.probability_bad, 0.5);
    }

    #[test]
    fn config_validation() {
        let bad = ModelConfig {
            folds: 1,
            ..ModelConfig::default()
        };
        assert!(matches!(bad.validate(), Err(ModelError::InvalidConfig(_))));
        let bad = ModelConfig {
            learning_rate: 0.0,
            ..ModelConfig::default()
        };
        assert!(bad.validate().is_err());
    }

    #[test]
    fn folds_are_balanced_and_stratified() {
        let ds = german::bundled();
        let folds = stratified_folds(&ds, 5, 7);
        assert_eq!(folds.len(), 1000);
        let mut sizes = [0usize; 5];
        let mut good = [0usize; 5];
        for (id, f) in &folds {
            sizes[*f] += 1;
            if ds.instances[*id as usize - 1].ground_truth.is_good() {
                good[*f] += 1;
            }
        }
        assert_eq!(sizes, [200; 5]);
        assert_eq!(good, [140; 5]);
    }

    #[test]
    fn summary_counts() {
        use Label::*;
        let s = PerformanceSummary::from_pairs([(Good, Good), (Good, Bad), (Bad, Bad), (Bad, Bad)]);
        assert_eq!(s.overall_accuracy, 0.75);
        assert_eq!(s.accuracy_good, Some(0.5));
        assert_eq!(s.accuracy_bad, Some(1.0));
        let s = PerformanceSummary::from_pairs([(Good, Good)]);
        assert_eq!(s.accuracy_bad, None);
    }

    #[test]
    fn weight_ordering() {
        let enc = Encoding {
            columns: vec![
                ColumnEncoder::MinMax {
                    feature: "a".into(),
                    min: 0.0,
                    max: 1.0,
                },
                ColumnEncoder::MinMax {
                    feature: "b".into(),
                    min: 0.0,
                    max: 1.0,
                },
            ],
        };
        let m = fixed_model(enc, &[0.1, -0.5], 0.0);
        let fw = m.feature_weights();
        assert_eq!(fw[0].column, "b");
        assert_eq!(fw[0].sign, Sign::Negative);
        assert_eq!(fw[1].sign, Sign::Positive);
    }
}
