use std::sync::OnceLock;

use fee_core::dataset::{Dataset, Label};
use fee_core::german;
use fee_core::metrics::{
    consistency, consistency_of_points, counterfactual_fairness, OutcomeTable, DEFAULT_NEIGHBORS,
};
use fee_core::model::{label_for, train, ModelConfig, TrainedModel};
use proptest::prelude::*;

fn fixture() -> &'static (Dataset, TrainedModel) {
    static CELL: OnceLock<(Dataset, TrainedModel)> = OnceLock::new();
    CELL.get_or_init(|| {
        let ds = german::bundled();
        let model = train(&ds, &ModelConfig::default()).unwrap();
        (ds, model)
    })
}

#[test]
fn default_model_lands_in_accuracy_band() {
    let (ds, model) = fixture();
    let perf = model.evaluate(ds).unwrap();
    assert_eq!(perf.test_size, 200);
    assert!(
        (0.70..=0.80).contains(&perf.overall_accuracy),
        "accuracy {}",
        perf.overall_accuracy
    );
}

#[test]
fn folds_are_stratified() {
    let (ds, model) = fixture();
    for fold in 0..5 {
        let ids: Vec<u32> = model
            .fold_assignment
            .iter()
            .filter(|(_, f)| **f == fold)
            .map(|(id, _)| *id)
            .collect();
        let good = ids
            .iter()
            .filter(|id| ds.instance(**id).unwrap().ground_truth == Label::Good)
            .count();
        assert_eq!((ids.len(), good), (200, 140), "fold {fold}");
    }
}

#[test]
fn training_is_deterministic_and_round_trips() {
    let (ds, model) = fixture();
    let again = train(ds, &ModelConfig::default()).unwrap();
    assert_eq!(again.to_json(), model.to_json());
    let back = TrainedModel::from_json(&model.to_json()).unwrap();
    assert_eq!(&back, model);
    let other = train(
        ds,
        &ModelConfig {
            seed: 7,
            ..ModelConfig::default()
        },
    )
    .unwrap();
    assert_ne!(other.fold_assignment, model.fold_assignment);
}

#[test]
fn model_rejects_a_different_dataset() {
    let (ds, model) = fixture();
    let mut altered = ds.clone();
    altered.instances[0].ground_truth = altered.instances[0].ground_truth.flipped();
    assert!(model.check_dataset(&altered).is_err());
    assert!(model.check_dataset(ds).is_ok());
}

#[test]
fn outcome_table_mirrors_predictions() {
    let (ds, model) = fixture();
    let table = OutcomeTable::for_model(model, ds).unwrap();
    assert_eq!(table.len(), 200);
    let preds = model.predict_active(ds).unwrap();
    for p in preds {
        let row = table.row(p.instance_id).unwrap();
        assert_eq!(row.predicted, p.predicted);
        assert!((p.probability_good + p.probability_bad - 1.0).abs() < 1e-12);
    }
    assert_eq!(table.performance(), model.evaluate(ds).unwrap());
}

fn with_weights(model: &TrainedModel, weights: &[f64], bias: f64) -> TrainedModel {
    let mut m = model.clone();
    for (w, v) in m.weights.iter_mut().zip(weights) {
        w.weight = *v;
    }
    m.bias = bias;
    m
}

#[test]
fn zeroed_group_weight_gives_full_counterfactual_ratio_on_trained_models() {
    let ds = &fixture().0;
    for seed in [42, 3, 11] {
        let model = train(
            ds,
            &ModelConfig {
                seed,
                ..ModelConfig::default()
            },
        )
        .unwrap();
        for f in ["age_group", "gender", "foreign_worker"] {
            let mut zeroed = model.clone();
            let col = zeroed.encoding.group_column(f).unwrap();
            zeroed.weights[col].weight = 0.0;
            assert_eq!(counterfactual_fairness(&zeroed, ds, f).unwrap().cfr, 100.0);
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn zeroed_group_weight_gives_full_counterfactual_ratio(
        scale in prop::collection::vec(-5.0f64..5.0, 64),
        bias in -3.0f64..3.0,
        which in 0usize..3,
    ) {
        let (ds, model) = fixture();
        let f = ["age_group", "gender", "foreign_worker"][which];
        let n = model.weights.len();
        let mut w: Vec<f64> = (0..n).map(|i| scale[i % scale.len()]).collect();
        w[model.encoding.group_column(f).unwrap()] = 0.0;
        let m = with_weights(model, &w, bias);
        let r = counterfactual_fairness(&m, ds, f).unwrap();
        prop_assert_eq!(r.cfr, 100.0);
        prop_assert!(r.violating_ids.is_empty());
    }

    #[test]
    fn constant_predictions_are_fully_consistent(bias in -4.0f64..4.0) {
        let (ds, model) = fixture();
        let m = with_weights(model, &vec![0.0; model.weights.len()], bias);
        prop_assert_eq!(consistency(&m, ds, DEFAULT_NEIGHBORS).unwrap().score, 100.0);
    }

    #[test]
    fn consistency_matches_brute_force(
        pts in prop::collection::vec((prop::collection::vec(0u8..4, 3), any::<bool>()), 6..20),
        k in 1usize..5,
    ) {
        let points: Vec<(u32, Vec<f64>, Label)> = pts
            .iter()
            .enumerate()
            .map(|(i, (x, g))| (i as u32 + 1, x.iter().map(|v| *v as f64).collect(), Label::from_bool(*g)))
            .collect();
        let got = consistency_of_points(&points, k).unwrap();
        let mut total = 0.0;
        for (id, x, y) in &points {
            let mut others: Vec<(f64, u32, f64)> = points
                .iter()
                .filter(|(o, _, _)| o != id)
                .map(|(o, ox, oy)| {
                    let d: f64 = x.iter().zip(ox).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
                    (d, *o, if oy.is_good() { 1.0 } else { 0.0 })
                })
                .collect();
            others.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap().then(a.1.cmp(&b.1)));
            let mean: f64 = others[..k].iter().map(|o| o.2).sum::<f64>() / k as f64;
            let yv = if y.is_good() { 1.0 } else { 0.0 };
            let expect = 1.0 - (yv - mean).abs();
            prop_assert!((got.per_instance[id] - expect).abs() < 1e-12);
            total += expect;
        }
        prop_assert!((got.score - 100.0 * total / points.len() as f64).abs() < 1e-9);
    }
}

#[test]
fn trained_predictions_agree_with_label_rule() {
    let (ds, model) = fixture();
    for inst in model.active_instances(ds).unwrap() {
        let p = model.predict(inst).unwrap();
        assert_eq!(p.predicted, label_for(p.probability_good));
    }
}
