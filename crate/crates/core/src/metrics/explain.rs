use serde::{Deserialize, Serialize};

use super::{group_metric, MetricError, MetricId, OutcomeTable, Result};
use crate::dataset::Label;

/// Conjunction defining one bucket.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BucketPredicate {
    pub protected: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub stratum: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ground_truth: Option<Label>,
    pub predicted: Label,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Bucket {
    pub title: String,
    pub predicate: BucketPredicate,
    pub ids: Vec<u32>,
    pub count: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExplanationBuckets {
    pub metric_id: MetricId,
    pub feature: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub condition: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub stratum: Option<String>,
    pub buckets: Vec<Bucket>,
}

fn uses_ground_truth(metric: MetricId) -> bool {
    matches!(
        metric,
        MetricId::EqualOpportunity
            | MetricId::PredictiveEquality
            | MetricId::EqualizedOdds
            | MetricId::OutcomeTest
    )
}

/// Splits the held-out instances into the disjoint cells a metric's rates
/// are counted from: group × Ŷ, plus Y for the label-conditioned metrics and
/// the stratum of `condition` when one is given. Empty cells are kept.
pub fn explanation_buckets(
    table: &OutcomeTable,
    metric: MetricId,
    feature: &str,
    condition: Option<&str>,
    stratum: Option<&str>,
) -> Result<ExplanationBuckets> {
    group_metric(table, metric, feature, condition)?;
    let spec = table.group_spec(feature)?;
    let legit = condition.map(|c| table.legitimate_spec(c)).transpose()?;
    let strata: Vec<Option<&str>> = match (legit, stratum) {
        (Some(l), Some(s)) => {
            if !l.strata.iter().any(|x| x == s) {
                return Err(MetricError::UndeclaredStratum {
                    feature: l.feature.clone(),
                    stratum: s.to_string(),
                });
            }
            vec![Some(s)]
        }
        (Some(l), None) => l.strata.iter().map(|s| Some(s.as_str())).collect(),
        (None, Some(s)) => {
            return Err(MetricError::UndeclaredStratum {
                feature: String::new(),
                stratum: s.to_string(),
            })
        }
        (None, None) => vec![None],
    };
    let truths: Vec<Option<Label>> = if uses_ground_truth(metric) {
        vec![Some(Label::Good), Some(Label::Bad)]
    } else {
        vec![None]
    };

    let mut buckets = Vec::new();
    for s in &strata {
        for protected in [true, false] {
            for y in &truths {
                for yhat in [Label::Good, Label::Bad] {
                    let ids: Vec<u32> = table
                        .rows
                        .iter()
                        .filter(|o| {
                            o.groups.get(&spec.feature) == Some(&protected)
                                && s.is_none_or(|s| {
                                    legit.is_some_and(|l| {
                                        o.strata.get(&l.feature).map(String::as_str) == Some(s)
                                    })
                                })
                                && y.is_none_or(|y| o.ground_truth == y)
                                && o.predicted == yhat
                        })
                        .map(|o| o.id)
                        .collect();
                    let mut title = spec.label(protected).to_string();
                    if let (Some(s), Some(l)) = (s, legit) {
                        title.push_str(&format!(", {}={s}", l.feature));
                    }
                    if let Some(y) = y {
                        title.push_str(&format!(", rated {y}"));
                    }
                    title.push_str(&format!(", predicted {yhat}"));
                    buckets.push(Bucket {
                        title,
                        predicate: BucketPredicate {
                            protected,
                            stratum: s.map(str::to_string),
                            ground_truth: *y,
                            predicted: yhat,
                        },
                        count: ids.len(),
                        ids,
                    });
                }
            }
        }
    }
    Ok(ExplanationBuckets {
        metric_id: metric,
        feature: spec.feature.clone(),
        condition: legit.map(|l| l.feature.clone()),
        stratum: stratum.map(str::to_string),
        buckets,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::metrics::group::tests::table;
    use crate::metrics::{conditional_statistical_parity, predictive_equality};

    fn count(b: &ExplanationBuckets, protected: bool, y: Option<Label>, yhat: Option<Label>) -> usize {
        b.buckets
            .iter()
            .filter(|k| {
                k.predicate.protected == protected
                    && y.is_none_or(|y| k.predicate.ground_truth == Some(y))
                    && yhat.is_none_or(|h| k.predicate.predicted == h)
            })
            .map(|k| k.count)
            .sum()
    }

    #[test]
    fn pe_buckets_reproduce_rates() {
        let t = table(&[
            (true, 0, 1, "skilled"),
            (true, 0, 0, "skilled"),
            (true, 0, 0, "skilled"),
            (true, 1, 1, "skilled"),
            (false, 0, 0, "skilled"),
            (false, 0, 1, "skilled"),
            (false, 1, 1, "unskilled"),
        ]);
        let b = explanation_buckets(&t, MetricId::PredictiveEquality, "g", None, None).unwrap();
        assert_eq!(b.buckets.len(), 8);
        let r = predictive_equality(&t, "g").unwrap();
        let num = count(&b, true, Some(Label::Bad), Some(Label::Good));
        let den = count(&b, true, Some(Label::Bad), None);
        assert_eq!((num, den), (r.count_protected.numerator, r.count_protected.denominator));
        let num = count(&b, false, Some(Label::Bad), Some(Label::Good));
        let den = count(&b, false, Some(Label::Bad), None);
        assert_eq!((num, den), (r.count_unprotected.numerator, r.count_unprotected.denominator));
        // protected, rated Good, predicted Bad is empty but present
        let empty = b
            .buckets
            .iter()
            .find(|k| {
                k.predicate.protected
                    && k.predicate.ground_truth == Some(Label::Good)
                    && k.predicate.predicted == Label::Bad
            })
            .unwrap();
        assert_eq!(empty.count, 0);
        let total: usize = b.buckets.iter().map(|k| k.count).sum();
        assert_eq!(total, t.len());
    }

    #[test]
    fn csp_stratum_restriction() {
        let t = table(&[
            (true, 1, 1, "skilled"),
            (false, 1, 0, "skilled"),
            (true, 1, 0, "unskilled"),
            (false, 0, 1, "unskilled"),
        ]);
        let b = explanation_buckets(
            &t,
            MetricId::ConditionalStatisticalParity,
            "g",
            Some("job"),
            Some("skilled"),
        )
        .unwrap();
        assert_eq!(b.buckets.len(), 4);
        let ids: Vec<u32> = b.buckets.iter().flat_map(|k| k.ids.clone()).collect();
        assert_eq!(ids, vec![1, 2]);
        let all =
            explanation_buckets(&t, MetricId::ConditionalStatisticalParity, "g", Some("job"), None)
                .unwrap();
        assert_eq!(all.buckets.len(), 12);
        let r = conditional_statistical_parity(&t, "g", "job").unwrap();
        assert_eq!(r.value, 100.0);
        assert!(explanation_buckets(
            &t,
            MetricId::ConditionalStatisticalParity,
            "g",
            Some("job"),
            Some("pilot")
        )
        .is_err());
    }

    #[test]
    fn dp_uses_four_buckets_and_propagates_errors() {
        let t = table(&[(true, 1, 1, "skilled"), (false, 0, 0, "skilled")]);
        let b = explanation_buckets(&t, MetricId::DemographicParity, "g", None, None).unwrap();
        assert_eq!(b.buckets.len(), 4);
        assert!(explanation_buckets(&t, MetricId::EqualOpportunity, "g", None, None).is_err());
    }
}
