use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::{MetricError, MetricId, Outcome, OutcomeTable, Result};
use crate::dataset::ProtectedGroupSpec;

/// Conditional rate `P(event | condition)` underlying a group metric.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) enum Rate {
    /// P(Ŷ=1)
    Positive,
    /// P(Ŷ=1 | Y=1)
    TruePositive,
    /// P(Ŷ=1 | Y=0)
    FalsePositive,
    /// P(Y=1 | Ŷ=1)
    Precision,
}

impl Rate {
    pub(crate) fn applies(self, o: &Outcome) -> bool {
        match self {
            Rate::Positive => true,
            Rate::TruePositive => o.ground_truth.is_good(),
            Rate::FalsePositive => !o.ground_truth.is_good(),
            Rate::Precision => o.predicted.is_good(),
        }
    }

    pub(crate) fn hit(self, o: &Outcome) -> bool {
        match self {
            Rate::Precision => o.ground_truth.is_good(),
            _ => o.predicted.is_good(),
        }
    }

    pub(crate) fn condition(self) -> &'static str {
        match self {
            Rate::Positive => "all instances",
            Rate::TruePositive => "Y=1",
            Rate::FalsePositive => "Y=0",
            Rate::Precision => "Ŷ=1",
        }
    }

    pub(crate) fn count<'a>(self, rows: impl IntoIterator<Item = &'a Outcome>) -> Fraction {
        let mut f = Fraction::default();
        for o in rows {
            if self.applies(o) {
                f.denominator += 1;
                if self.hit(o) {
                    f.numerator += 1;
                }
            }
        }
        f
    }

    /// Rates that make up a non-conditional group metric.
    pub(crate) fn of(metric: MetricId) -> &'static [Rate] {
        match metric {
            MetricId::DemographicParity | MetricId::ConditionalStatisticalParity => {
                &[Rate::Positive]
            }
            MetricId::EqualOpportunity => &[Rate::TruePositive],
            MetricId::PredictiveEquality => &[Rate::FalsePositive],
            MetricId::EqualizedOdds => &[Rate::TruePositive, Rate::FalsePositive],
            MetricId::OutcomeTest => &[Rate::Precision],
            MetricId::CounterfactualFairness | MetricId::Consistency => &[],
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Fraction {
    pub numerator: usize,
    pub denominator: usize,
}

impl Fraction {
    /// Percentage, or `None` for an empty denominator.
    pub fn percent(self) -> Option<f64> {
        (self.denominator > 0).then(|| 100.0 * self.numerator as f64 / self.denominator as f64)
    }
}

/// Difference1 (true-positive gap) and Difference2 (false-positive gap) of
/// equalized odds.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OddsComponents {
    pub equal_opportunity: f64,
    pub predictive_equality: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StratumDifference {
    pub difference: f64,
    pub rate_protected: f64,
    pub rate_unprotected: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupMetricResult {
    pub metric_id: MetricId,
    pub feature: String,
    /// Legitimate feature conditioned on (conditional statistical parity).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub condition: Option<String>,
    /// Absolute rate difference in percent.
    pub value: f64,
    pub rate_protected: f64,
    pub rate_unprotected: f64,
    pub count_protected: Fraction,
    pub count_unprotected: Fraction,
    pub protected_label: String,
    pub unprotected_label: String,
    /// Group with the higher rate; `None` on exact parity.
    pub advantaged_group: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub components: Option<OddsComponents>,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub strata_breakdown: BTreeMap<String, StratumDifference>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub excluded_strata: Vec<String>,
}

struct Sides {
    protected: Fraction,
    unprotected: Fraction,
}

impl Sides {
    fn count<'a>(
        rows: impl IntoIterator<Item = &'a Outcome>,
        spec: &ProtectedGroupSpec,
        rate: Rate,
    ) -> Sides {
        let (prot, unprot): (Vec<&Outcome>, Vec<&Outcome>) = rows
            .into_iter()
            .partition(|o| o.groups.get(&spec.feature).copied().unwrap_or(false));
        Sides {
            protected: rate.count(prot),
            unprotected: rate.count(unprot),
        }
    }

    fn rates(&self, metric: MetricId, spec: &ProtectedGroupSpec, rate: Rate) -> Result<(f64, f64)> {
        let empty = |protected: bool| MetricError::EmptyDenominator {
            metric,
            group: spec.label(protected).to_string(),
            condition: rate.condition().to_string(),
        };
        let p = self.protected.percent().ok_or_else(|| empty(true))?;
        let u = self.unprotected.percent().ok_or_else(|| empty(false))?;
        Ok((p, u))
    }
}

fn advantaged(spec: &ProtectedGroupSpec, rate_protected: f64, rate_unprotected: f64) -> Option<String> {
    if rate_protected > rate_unprotected {
        Some(spec.protected_label.clone())
    } else if rate_unprotected > rate_protected {
        Some(spec.unprotected_label.clone())
    } else {
        None
    }
}

fn plain(table: &OutcomeTable, metric: MetricId, feature: &str, rate: Rate) -> Result<GroupMetricResult> {
    let spec = table.group_spec(feature)?;
    let sides = Sides::count(&table.rows, spec, rate);
    let (p, u) = sides.rates(metric, spec, rate)?;
    Ok(GroupMetricResult {
        metric_id: metric,
        feature: spec.feature.clone(),
        condition: None,
        value: (u - p).abs(),
        rate_protected: p,
        rate_unprotected: u,
        count_protected: sides.protected,
        count_unprotected: sides.unprotected,
        protected_label: spec.protected_label.clone(),
        unprotected_label: spec.unprotected_label.clone(),
        advantaged_group: advantaged(spec, p, u),
        components: None,
        strata_breakdown: BTreeMap::new(),
        excluded_strata: Vec::new(),
    })
}

/// |P(Ŷ=1 | G=0) − P(Ŷ=1 | G=1)|
pub fn demographic_parity(table: &OutcomeTable, feature: &str) -> Result<GroupMetricResult> {
    plain(table, MetricId::DemographicParity, feature, Rate::Positive)
}

/// |P(Ŷ=1 | Y=1, G=0) − P(Ŷ=1 | Y=1, G=1)|
pub fn equal_opportunity(table: &OutcomeTable, feature: &str) -> Result<GroupMetricResult> {
    plain(table, MetricId::EqualOpportunity, feature, Rate::TruePositive)
}

/// |P(Ŷ=1 | Y=0, G=0) − P(Ŷ=1 | Y=0, G=1)|
pub fn predictive_equality(table: &OutcomeTable, feature: &str) -> Result<GroupMetricResult> {
    plain(table, MetricId::PredictiveEquality, feature, Rate::FalsePositive)
}

/// |P(Y=1 | Ŷ=1, G=0) − P(Y=1 | Ŷ=1, G=1)|
pub fn outcome_test(table: &OutcomeTable, feature: &str) -> Result<GroupMetricResult> {
    plain(table, MetricId::OutcomeTest, feature, Rate::Precision)
}

/// max(Difference1, Difference2); the reported rates belong to the larger
/// component (the true-positive one on a tie).
pub fn equalized_odds(table: &OutcomeTable, feature: &str) -> Result<GroupMetricResult> {
    let metric = MetricId::EqualizedOdds;
    let tpr = plain(table, metric, feature, Rate::TruePositive)?;
    let fpr = plain(table, metric, feature, Rate::FalsePositive)?;
    let components = OddsComponents {
        equal_opportunity: tpr.value,
        predictive_equality: fpr.value,
    };
    let mut out = if fpr.value > tpr.value { fpr } else { tpr };
    out.value = components.equal_opportunity.max(components.predictive_equality);
    out.components = Some(components);
    Ok(out)
}

/// Positive-rate difference inside each stratum of the legitimate feature.
/// Strata lacking either group are excluded; the headline value is the
/// largest stratum difference.
pub fn conditional_statistical_parity(
    table: &OutcomeTable,
    feature: &str,
    legitimate: &str,
) -> Result<GroupMetricResult> {
    let metric = MetricId::ConditionalStatisticalParity;
    let spec = table.group_spec(feature)?;
    let legit = table.legitimate_spec(legitimate)?;
    let mut breakdown = BTreeMap::new();
    let mut excluded = Vec::new();
    let mut worst: Option<(String, Sides, f64, f64)> = None;
    for stratum in &legit.strata {
        let rows = table
            .rows
            .iter()
            .filter(|o| o.strata.get(&legit.feature) == Some(stratum));
        let sides = Sides::count(rows, spec, Rate::Positive);
        let (Some(p), Some(u)) = (sides.protected.percent(), sides.unprotected.percent()) else {
            excluded.push(stratum.clone());
            continue;
        };
        let diff = (u - p).abs();
        breakdown.insert(
            stratum.clone(),
            StratumDifference {
                difference: diff,
                rate_protected: p,
                rate_unprotected: u,
            },
        );
        if worst.as_ref().is_none_or(|w| diff > (w.3 - w.2).abs()) {
            worst = Some((stratum.clone(), sides, p, u));
        }
    }
    let (_, sides, p, u) = worst.ok_or_else(|| MetricError::NoValidStratum {
        metric,
        feature: legit.feature.clone(),
    })?;
    Ok(GroupMetricResult {
        metric_id: metric,
        feature: spec.feature.clone(),
        condition: Some(legit.feature.clone()),
        value: (u - p).abs(),
        rate_protected: p,
        rate_unprotected: u,
        count_protected: sides.protected,
        count_unprotected: sides.unprotected,
        protected_label: spec.protected_label.clone(),
        unprotected_label: spec.unprotected_label.clone(),
        advantaged_group: advantaged(spec, p, u),
        components: None,
        strata_breakdown: breakdown,
        excluded_strata: excluded,
    })
}

/// Dispatches to the metric's operation. `condition` names the legitimate
/// feature and is required for conditional statistical parity only.
pub fn group_metric(
    table: &OutcomeTable,
    metric: MetricId,
    feature: &str,
    condition: Option<&str>,
) -> Result<GroupMetricResult> {
    match metric {
        MetricId::DemographicParity => demographic_parity(table, feature),
        MetricId::EqualOpportunity => equal_opportunity(table, feature),
        MetricId::PredictiveEquality => predictive_equality(table, feature),
        MetricId::EqualizedOdds => equalized_odds(table, feature),
        MetricId::OutcomeTest => outcome_test(table, feature),
        MetricId::ConditionalStatisticalParity => conditional_statistical_parity(
            table,
            feature,
            condition.ok_or(MetricError::MissingCondition)?,
        ),
        MetricId::CounterfactualFairness | MetricId::Consistency => {
            Err(MetricError::NotGroupMetric(metric))
        }
    }
}

#[cfg(test)]
pub(crate) mod tests {
    use super::*;
    use crate::dataset::{GroupPredicate, Label, LegitimateFeatureSpec};

    pub(crate) fn spec(feature: &str) -> ProtectedGroupSpec {
        ProtectedGroupSpec {
            feature: feature.into(),
            source: format!("{feature}_raw"),
            predicate: GroupPredicate::OneOf {
                codes: vec!["p".into()],
            },
            protected_label: format!("{feature}:protected"),
            unprotected_label: format!("{feature}:unprotected"),
        }
    }

    /// Rows of (protected on `g`, Y, Ŷ, job stratum).
    pub(crate) fn table(rows: &[(bool, u8, u8, &str)]) -> OutcomeTable {
        OutcomeTable {
            rows: rows
                .iter()
                .enumerate()
                .map(|(i, (p, y, yh, job))| Outcome {
                    id: i as u32 + 1,
                    ground_truth: Label::try_from(*y).unwrap(),
                    predicted: Label::try_from(*yh).unwrap(),
                    probability_good: if *yh == 1 { 0.8 } else { 0.2 },
                    overridden: false,
                    groups: BTreeMap::from([("g".to_string(), *p)]),
                    strata: BTreeMap::from([("job".to_string(), job.to_string())]),
                })
                .collect(),
            group_specs: vec![spec("g")],
            legitimate_specs: vec![LegitimateFeatureSpec {
                feature: "job".into(),
                strata: vec!["skilled".into(), "unskilled".into(), "mgmt".into()],
                edges: None,
            }],
        }
    }

    #[test]
    fn dp_quarter_gap() {
        // protected 2/4 positive, unprotected 3/4 positive
        let t = table(&[
            (true, 1, 1, "skilled"),
            (true, 0, 1, "skilled"),
            (true, 1, 0, "skilled"),
            (true, 0, 0, "skilled"),
            (false, 1, 1, "skilled"),
            (false, 1, 1, "skilled"),
            (false, 0, 1, "skilled"),
            (false, 0, 0, "skilled"),
        ]);
        let r = demographic_parity(&t, "g").unwrap();
        assert_eq!(r.value, 25.0);
        assert_eq!(r.rate_protected, 50.0);
        assert_eq!(r.advantaged_group.as_deref(), Some("g:unprotected"));
    }

    #[test]
    fn dp_parity_and_empty_group() {
        let t = table(&[(true, 1, 1, "skilled"), (false, 0, 1, "skilled")]);
        let r = demographic_parity(&t, "g").unwrap();
        assert_eq!(r.value, 0.0);
        assert_eq!(r.advantaged_group, None);
        let t = table(&[(true, 1, 1, "skilled"), (true, 0, 0, "skilled")]);
        assert!(matches!(
            demographic_parity(&t, "g"),
            Err(MetricError::EmptyDenominator { .. })
        ));
    }

    #[test]
    fn eopp_half_gap_and_errors() {
        let t = table(&[
            (true, 1, 1, "skilled"),
            (true, 1, 0, "skilled"),
            (false, 1, 1, "skilled"),
            (false, 1, 1, "skilled"),
        ]);
        assert_eq!(equal_opportunity(&t, "g").unwrap().value, 50.0);
        let t = table(&[(true, 0, 1, "skilled"), (false, 1, 1, "skilled")]);
        assert!(equal_opportunity(&t, "g").is_err());
    }

    #[test]
    fn pe_third_gap() {
        let t = table(&[
            (true, 0, 1, "skilled"),
            (true, 0, 0, "skilled"),
            (true, 0, 0, "skilled"),
            (false, 0, 0, "skilled"),
            (false, 0, 0, "skilled"),
            (false, 1, 1, "skilled"),
        ]);
        let r = predictive_equality(&t, "g").unwrap();
        assert!((r.value - 100.0 / 3.0).abs() < 1e-12);
        let all_good = table(&[(true, 1, 1, "skilled"), (false, 1, 0, "skilled")]);
        assert!(predictive_equality(&all_good, "g").is_err());
    }

    #[test]
    fn ot_precision_gap() {
        // precisions 2/3 vs 1/2
        let t = table(&[
            (true, 1, 1, "skilled"),
            (true, 1, 1, "skilled"),
            (true, 0, 1, "skilled"),
            (false, 1, 1, "skilled"),
            (false, 0, 1, "skilled"),
            (false, 1, 0, "skilled"),
        ]);
        let r = outcome_test(&t, "g").unwrap();
        assert!((r.value - 100.0 / 6.0).abs() < 1e-12);
        let none_pos = table(&[(true, 1, 0, "skilled"), (false, 1, 1, "skilled")]);
        assert!(outcome_test(&none_pos, "g").is_err());
    }

    #[test]
    fn eodds_is_max_of_components() {
        let t = table(&[
            (true, 1, 1, "skilled"),
            (true, 1, 0, "skilled"),
            (true, 0, 1, "skilled"),
            (true, 0, 0, "skilled"),
            (false, 1, 1, "skilled"),
            (false, 1, 1, "skilled"),
            (false, 0, 0, "skilled"),
            (false, 0, 0, "skilled"),
        ]);
        let eo = equal_opportunity(&t, "g").unwrap().value;
        let pe = predictive_equality(&t, "g").unwrap().value;
        let r = equalized_odds(&t, "g").unwrap();
        assert_eq!(r.value, eo.max(pe));
        let c = r.components.unwrap();
        assert_eq!((c.equal_opportunity, c.predictive_equality), (eo, pe));
    }

    #[test]
    fn csp_takes_worst_stratum_and_excludes_one_sided() {
        // skilled: 1/2 vs 3/5 -> 10; unskilled: 1/5 vs 3/5 -> 40; mgmt: only unprotected
        let mut rows = vec![(true, 1, 1, "skilled"), (true, 1, 0, "skilled")];
        rows.extend([(false, 1, 1, "skilled"); 3]);
        rows.extend([(false, 1, 0, "skilled"); 2]);
        rows.push((true, 1, 1, "unskilled"));
        rows.extend([(true, 1, 0, "unskilled"); 4]);
        rows.extend([(false, 1, 1, "unskilled"); 3]);
        rows.extend([(false, 1, 0, "unskilled"); 2]);
        rows.push((false, 1, 1, "mgmt"));
        let t = table(&rows);
        let r = conditional_statistical_parity(&t, "g", "job").unwrap();
        assert!((r.value - 40.0).abs() < 1e-9);
        assert!((r.strata_breakdown["skilled"].difference - 10.0).abs() < 1e-9);
        assert_eq!(r.excluded_strata, vec!["mgmt".to_string()]);
        assert_eq!(r.condition.as_deref(), Some("job"));
    }

    #[test]
    fn csp_single_stratum_equal_rates() {
        let t = table(&[(true, 1, 1, "skilled"), (false, 0, 1, "skilled")]);
        assert_eq!(conditional_statistical_parity(&t, "g", "job").unwrap().value, 0.0);
        let t = table(&[(true, 1, 1, "skilled"), (false, 0, 1, "mgmt")]);
        assert!(matches!(
            conditional_statistical_parity(&t, "g", "job"),
            Err(MetricError::NoValidStratum { .. })
        ));
    }

    #[test]
    fn dispatch_rules() {
        let t = table(&[(true, 1, 1, "skilled"), (false, 0, 1, "skilled")]);
        assert_eq!(
            group_metric(&t, MetricId::ConditionalStatisticalParity, "g", None),
            Err(MetricError::MissingCondition)
        );
        assert!(matches!(
            group_metric(&t, MetricId::Consistency, "g", None),
            Err(MetricError::NotGroupMetric(_))
        ));
        assert!(matches!(
            group_metric(&t, MetricId::DemographicParity, "h", None),
            Err(MetricError::UnknownGroup(_))
        ));
    }
}
