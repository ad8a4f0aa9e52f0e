use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::{MetricError, Result};
use crate::dataset::{Dataset, Instance, Label};
use crate::model::{label_for, TrainedModel};

/// Neighbourhood size of the consistency score.
pub const DEFAULT_NEIGHBORS: usize = 5;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CounterfactualResult {
    pub protected_feature: String,
    /// Percentage of instances whose prediction survives the flip.
    pub cfr: f64,
    pub violating_ids: Vec<u32>,
    pub n: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConsistencyResult {
    pub score: f64,
    pub per_instance: BTreeMap<u32, f64>,
    pub n_neighbors: usize,
    pub neighbor_map: BTreeMap<u32, Vec<u32>>,
}

/// Re-predicts every instance with its protected group column flipped.
pub fn counterfactual_on(
    model: &TrainedModel,
    instances: &[&Instance],
    feature: &str,
) -> Result<CounterfactualResult> {
    let column = model
        .encoding
        .group_column(feature)
        .ok_or_else(|| MetricError::UnsupportedCounterfactual(feature.to_string()))?;
    let mut violating = Vec::new();
    for inst in instances {
        let mut x = model.encoding.encode(inst)?;
        let actual = label_for(model.probability(&x));
        x[column] = 1.0 - x[column];
        if label_for(model.probability(&x)) != actual {
            violating.push(inst.id);
        }
    }
    let n = instances.len();
    if n == 0 {
        return Err(MetricError::TooFewInstances { n, k: 0 });
    }
    Ok(CounterfactualResult {
        protected_feature: feature.to_string(),
        cfr: 100.0 * (n - violating.len()) as f64 / n as f64,
        violating_ids: violating,
        n,
    })
}

/// Counterfactual fairness ratio over the model's held-out fold.
pub fn counterfactual_fairness(
    model: &TrainedModel,
    dataset: &Dataset,
    feature: &str,
) -> Result<CounterfactualResult> {
    let feature = dataset
        .resolve_group(feature)
        .map(|s| s.feature.as_str())
        .unwrap_or(feature);
    let instances = model.active_instances(dataset)?;
    counterfactual_on(model, &instances, feature)
}

fn squared_distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Consistency over `(id, encoded features, predicted label)` points:
/// each point is compared with its `k` nearest other points (Euclidean,
/// ties broken by lower id).
pub fn consistency_of_points(points: &[(u32, Vec<f64>, Label)], k: usize) -> Result<ConsistencyResult> {
    let n = points.len();
    if n <= k || k == 0 {
        return Err(MetricError::TooFewInstances { n, k });
    }
    let mut per_instance = BTreeMap::new();
    let mut neighbor_map = BTreeMap::new();
    for (i, (id, x, yhat)) in points.iter().enumerate() {
        let mut others: Vec<(f64, u32, Label)> = points
            .iter()
            .enumerate()
            .filter(|(j, _)| *j != i)
            .map(|(_, (oid, ox, oy))| (squared_distance(x, ox), *oid, *oy))
            .collect();
        others.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
        others.truncate(k);
        let mean = others.iter().map(|o| o.2.as_f64()).sum::<f64>() / k as f64;
        per_instance.insert(*id, 1.0 - (yhat.as_f64() - mean).abs());
        neighbor_map.insert(*id, others.iter().map(|o| o.1).collect());
    }
    let score = 100.0 * per_instance.values().sum::<f64>() / n as f64;
    Ok(ConsistencyResult {
        score,
        per_instance,
        n_neighbors: k,
        neighbor_map,
    })
}

/// Consistency of the model's predictions over its held-out fold, in the
/// model's encoded feature space.
pub fn consistency(model: &TrainedModel, dataset: &Dataset, k: usize) -> Result<ConsistencyResult> {
    let points = model
        .active_instances(dataset)?
        .into_iter()
        .map(|inst| {
            let x = model.encoding.encode(inst)?;
            let label = label_for(model.probability(&x));
            Ok((inst.id, x, label))
        })
        .collect::<Result<Vec<_>>>()?;
    consistency_of_points(&points, k)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::tests::toy;
    use crate::model::tests::fixed_model;
    use crate::model::{ColumnEncoder, Encoding};

    fn encoding() -> Encoding {
        Encoding {
            columns: vec![
                ColumnEncoder::MinMax {
                    feature: "age".into(),
                    min: 0.0,
                    max: 100.0,
                },
                ColumnEncoder::Group {
                    feature: "gender".into(),
                    label: "female".into(),
                },
            ],
        }
    }

    #[test]
    fn zero_weight_flip_is_invariant() {
        let ds = toy();
        let model = fixed_model(encoding(), &[1.0, 0.0], -0.3);
        let insts: Vec<&Instance> = ds.instances.iter().collect();
        let r = counterfactual_on(&model, &insts, "gender").unwrap();
        assert_eq!(r.cfr, 100.0);
        assert!(r.violating_ids.is_empty());
        assert_eq!(r.n, 6);
    }

    #[test]
    fn one_of_four_crosses_the_boundary() {
        // z = 4*age/100 - 1.4 + 0.3*female; ages 22,40,19,31 with genders F,M,M,F
        let ds = toy();
        let model = fixed_model(encoding(), &[4.0, 0.3], -1.4);
        let insts: Vec<&Instance> = ds.instances.iter().take(4).collect();
        let mut expected = Vec::new();
        for inst in &insts {
            let age = inst.values["age"].as_number().unwrap() / 100.0;
            let g = if inst.groups["gender"] { 1.0 } else { 0.0 };
            let z = 4.0 * age - 1.4 + 0.3 * g;
            let zf = 4.0 * age - 1.4 + 0.3 * (1.0 - g);
            if (z >= 0.0) != (zf >= 0.0) {
                expected.push(inst.id);
            }
        }
        // only id 4 (31, F) crosses: 0.14 -> -0.16
        assert_eq!(expected, vec![4]);
        let r = counterfactual_on(&model, &insts, "gender").unwrap();
        assert_eq!(r.violating_ids, expected);
        assert_eq!(r.cfr, 75.0);
    }

    #[test]
    fn raw_feature_rejected() {
        let ds = toy();
        let model = fixed_model(encoding(), &[1.0, 0.0], 0.0);
        let insts: Vec<&Instance> = ds.instances.iter().collect();
        assert!(matches!(
            counterfactual_on(&model, &insts, "age"),
            Err(MetricError::UnsupportedCounterfactual(_))
        ));
    }

    #[test]
    fn neighbour_mean_formula() {
        use Label::*;
        // instance 1 at origin, neighbours at increasing distance: G,G,G,B,B
        let labels = [Good, Good, Good, Good, Bad, Bad, Bad];
        let points: Vec<_> = labels
            .iter()
            .enumerate()
            .map(|(i, l)| (i as u32 + 1, vec![i as f64], *l))
            .collect();
        let r = consistency_of_points(&points, 5).unwrap();
        assert!((r.per_instance[&1] - 0.6).abs() < 1e-12);
        assert_eq!(r.neighbor_map[&1], vec![2, 3, 4, 5, 6]);
    }

    #[test]
    fn identical_predictions_are_fully_consistent() {
        let points: Vec<_> = (0..8)
            .map(|i| (i as u32 + 1, vec![(i * i) as f64], Label::Bad))
            .collect();
        assert_eq!(consistency_of_points(&points, 5).unwrap().score, 100.0);
    }

    #[test]
    fn duplicates_are_mutual_neighbours() {
        let mut points = vec![(1, vec![0.0, 0.0], Label::Good), (2, vec![0.0, 0.0], Label::Good)];
        for i in 3..=8 {
            points.push((i, vec![10.0 + i as f64, 0.0], Label::Bad));
        }
        let r = consistency_of_points(&points, 1).unwrap();
        assert_eq!(r.neighbor_map[&1], vec![2]);
        assert_eq!(r.neighbor_map[&2], vec![1]);
        assert_eq!(r.per_instance[&1], 1.0);
        assert_eq!(r.per_instance[&2], 1.0);
    }

    #[test]
    fn fold_too_small() {
        let points: Vec<_> = (0..5).map(|i| (i, vec![0.0], Label::Good)).collect();
        assert!(matches!(
            consistency_of_points(&points, 5),
            Err(MetricError::TooFewInstances { n: 5, k: 5 })
        ));
    }
}
