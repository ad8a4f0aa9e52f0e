mod support;

use fee_core::metrics::{
    equal_opportunity, equalized_odds, group_metric, predictive_equality, subgroup_metric,
    MetricId, OutcomeTable,
};
use proptest::prelude::*;
use support::{build_table, oracle, raw_rows, RawRow, FEATURES};

const SETS: [&[usize]; 7] = [&[0], &[1], &[2], &[0, 1], &[0, 2], &[1, 2], &[0, 1, 2]];

fn library(table: &OutcomeTable, metric: MetricId, features: &[usize]) -> Option<f64> {
    let cond = (metric == MetricId::ConditionalStatisticalParity).then_some("job");
    let names: Vec<&str> = features.iter().map(|i| FEATURES[*i]).collect();
    if names.len() == 1 {
        group_metric(table, metric, names[0], cond).ok().map(|r| r.value)
    } else {
        subgroup_metric(table, metric, &names, cond).ok().map(|r| r.value)
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn matches_counting_oracle(rows in raw_rows(12)) {
        let table = build_table(&rows);
        for metric in MetricId::GROUP_FAMILY {
            for set in SETS {
                let want = oracle(&rows, metric, set);
                let got = library(&table, metric, set);
                match (want, got) {
                    (None, None) => {}
                    (Some(w), Some(g)) => prop_assert!((w - g).abs() <= 1e-9, "{metric} {set:?}: {w} vs {g}"),
                    _ => prop_assert!(false, "{metric} {set:?}: oracle {want:?}, library {got:?}"),
                }
            }
        }
    }

    #[test]
    fn equalized_odds_is_max_of_components(rows in raw_rows(12)) {
        let t = build_table(&rows);
        for f in FEATURES {
            if let (Ok(a), Ok(b)) = (equal_opportunity(&t, f), predictive_equality(&t, f)) {
                let e = equalized_odds(&t, f).unwrap();
                prop_assert_eq!(e.value, a.value.max(b.value));
                let c = e.components.unwrap();
                prop_assert_eq!((c.equal_opportunity, c.predictive_equality), (a.value, b.value));
            } else {
                prop_assert!(equalized_odds(&t, f).is_err());
            }
        }
    }

    #[test]
    fn perfect_classifier_has_zero_error_gaps(rows in raw_rows(12)) {
        let rows: Vec<RawRow> = rows.into_iter().map(|(g, y, _, s)| (g, y, y, s)).collect();
        let t = build_table(&rows);
        for metric in [
            MetricId::EqualOpportunity,
            MetricId::PredictiveEquality,
            MetricId::EqualizedOdds,
            MetricId::OutcomeTest,
        ] {
            for set in SETS {
                if let Some(v) = library(&t, metric, set) {
                    prop_assert_eq!(v, 0.0, "{} {:?}", metric, set);
                }
            }
        }
    }

    #[test]
    fn swapping_group_sides_keeps_the_value(rows in raw_rows(12)) {
        let swapped: Vec<RawRow> = rows
            .iter()
            .map(|(g, y, yh, s)| ([!g[0], g[1], g[2]], *y, *yh, *s))
            .collect();
        let (t, u) = (build_table(&rows), build_table(&swapped));
        for metric in MetricId::GROUP_FAMILY {
            for set in SETS {
                let (x, y) = (library(&t, metric, set), library(&u, metric, set));
                match (x, y) {
                    (Some(x), Some(y)) => prop_assert!((x - y).abs() <= 1e-9),
                    (x, y) => prop_assert_eq!(x, y),
                }
            }
        }
    }

    #[test]
    fn values_are_percentages(rows in raw_rows(12)) {
        let t = build_table(&rows);
        for metric in MetricId::GROUP_FAMILY {
            for set in SETS {
                if let Some(v) = library(&t, metric, set) {
                    prop_assert!((0.0..=100.0).contains(&v));
                }
            }
        }
    }
}

#[test]
fn rows_with_identical_groups_cannot_form_a_comparison() {
    let rows = vec![([true, true, true], true, true, 0); 5];
    let t = build_table(&rows);
    assert!(group_metric(&t, MetricId::DemographicParity, "a", None).is_err());
    assert!(subgroup_metric(&t, MetricId::DemographicParity, &["a", "b"], None).is_err());
}
