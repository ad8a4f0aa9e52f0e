use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::group::{Fraction, Rate};
use super::{MetricError, MetricId, OddsComponents, Outcome, OutcomeTable, Result};
use crate::dataset::ProtectedGroupSpec;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubgroupMetricResult {
    pub metric_id: MetricId,
    pub feature_set: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub condition: Option<String>,
    /// Rates of the valid subgroups. For equalized odds these are the rates
    /// of the dominant component; for conditional statistical parity, those
    /// of the worst stratum.
    pub subgroup_rates: BTreeMap<String, f64>,
    /// Largest pairwise rate difference, in percent.
    pub value: f64,
    pub most_advantaged: Option<String>,
    pub most_disadvantaged: Option<String>,
    pub excluded_subgroups: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub components: Option<OddsComponents>,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub strata_breakdown: BTreeMap<String, f64>,
}

/// One cell of the protected cross product.
struct Cell<'a> {
    key: String,
    members: Vec<&'a Outcome>,
}

/// Cells in a fixed order: the first feature varies slowest, protected
/// before unprotected.
fn cells<'a>(
    rows: impl Iterator<Item = &'a Outcome> + Clone,
    specs: &[&ProtectedGroupSpec],
) -> Vec<Cell<'a>> {
    let k = specs.len();
    (0..1usize << k)
        .map(|mask| {
            let pattern: Vec<bool> = (0..k).map(|i| mask & (1 << (k - 1 - i)) == 0).collect();
            let key = specs
                .iter()
                .zip(&pattern)
                .map(|(s, p)| s.label(*p).to_string())
                .collect::<Vec<_>>()
                .join(" & ");
            let members = rows
                .clone()
                .filter(|o| {
                    specs
                        .iter()
                        .zip(&pattern)
                        .all(|(s, p)| o.groups.get(&s.feature) == Some(p))
                })
                .collect();
            Cell { key, members }
        })
        .collect()
}

struct Spread {
    value: f64,
    max_key: Option<String>,
    min_key: Option<String>,
}

/// max − min over the rates (equal to the largest pairwise gap).
fn spread(rates: &[(String, f64)]) -> Spread {
    let mut hi: Option<&(String, f64)> = None;
    let mut lo: Option<&(String, f64)> = None;
    for r in rates {
        if hi.is_none_or(|h| r.1 > h.1) {
            hi = Some(r);
        }
        if lo.is_none_or(|l| r.1 < l.1) {
            lo = Some(r);
        }
    }
    match (hi, lo) {
        (Some(h), Some(l)) if h.1 > l.1 => Spread {
            value: h.1 - l.1,
            max_key: Some(h.0.clone()),
            min_key: Some(l.0.clone()),
        },
        _ => Spread {
            value: 0.0,
            max_key: None,
            min_key: None,
        },
    }
}

/// Subgroup rates for one set of cells; cells whose required denominators
/// are empty go to `excluded`.
fn rates_for(cells: &[Cell<'_>], rates: &[Rate], excluded: &mut Vec<String>, prefix: &str) -> Vec<Vec<(String, f64)>> {
    let mut out = vec![Vec::new(); rates.len()];
    for cell in cells {
        let fractions: Vec<Fraction> = rates
            .iter()
            .map(|r| r.count(cell.members.iter().copied()))
            .collect();
        if fractions.iter().any(|f| f.denominator == 0) {
            excluded.push(format!("{prefix}{}", cell.key));
            continue;
        }
        for (slot, f) in out.iter_mut().zip(&fractions) {
            slot.push((cell.key.clone(), f.percent().unwrap_or_default()));
        }
    }
    out
}

/// Group-family metric over the cross product of 2–3 protected features.
/// `condition` is the legitimate feature for conditional statistical parity.
pub fn subgroup_metric(
    table: &OutcomeTable,
    metric: MetricId,
    features: &[&str],
    condition: Option<&str>,
) -> Result<SubgroupMetricResult> {
    if metric.is_individual() {
        return Err(MetricError::NotGroupMetric(metric));
    }
    let specs = features
        .iter()
        .map(|f| table.group_spec(f))
        .collect::<Result<Vec<_>>>()?;
    let mut names: Vec<&str> = specs.iter().map(|s| s.feature.as_str()).collect();
    let feature_set: Vec<String> = names.iter().map(|s| s.to_string()).collect();
    names.sort_unstable();
    names.dedup();
    if !(2..=3).contains(&specs.len()) || names.len() != specs.len() {
        return Err(MetricError::InvalidFeatureSet(
            features.iter().map(|s| s.to_string()).collect(),
        ));
    }

    let rates = Rate::of(metric);
    let mut excluded = Vec::new();

    if metric == MetricId::ConditionalStatisticalParity {
        let legit = table.legitimate_spec(condition.ok_or(MetricError::MissingCondition)?)?;
        let mut breakdown = BTreeMap::new();
        let mut worst: Option<(Vec<(String, f64)>, Spread)> = None;
        for stratum in &legit.strata {
            let rows = table
                .rows
                .iter()
                .filter(|o| o.strata.get(&legit.feature) == Some(stratum));
            let cells = cells(rows, &specs);
            let mut per = rates_for(&cells, rates, &mut excluded, &format!("{stratum}: "));
            let valid = per.remove(0);
            if valid.len() < 2 {
                continue;
            }
            let s = spread(&valid);
            breakdown.insert(stratum.clone(), s.value);
            if worst.as_ref().is_none_or(|(_, w)| s.value > w.value) {
                worst = Some((valid, s));
            }
        }
        let (valid, s) = worst.ok_or_else(|| MetricError::NoValidStratum {
            metric,
            feature: legit.feature.clone(),
        })?;
        return Ok(SubgroupMetricResult {
            metric_id: metric,
            feature_set,
            condition: Some(legit.feature.clone()),
            subgroup_rates: valid.into_iter().collect(),
            value: s.value,
            most_advantaged: s.max_key,
            most_disadvantaged: s.min_key,
            excluded_subgroups: excluded,
            components: None,
            strata_breakdown: breakdown,
        });
    }

    let cells = cells(table.rows.iter(), &specs);
    let per = rates_for(&cells, rates, &mut excluded, "");
    if per[0].len() < 2 {
        return Err(MetricError::TooFewSubgroups { metric });
    }
    let spreads: Vec<Spread> = per.iter().map(|r| spread(r)).collect();
    // dominant component: first with the largest spread
    let dominant = (0..spreads.len())
        .rev()
        .max_by(|a, b| spreads[*a].value.total_cmp(&spreads[*b].value))
        .unwrap_or(0);
    let components = (metric == MetricId::EqualizedOdds).then(|| OddsComponents {
        equal_opportunity: spreads[0].value,
        predictive_equality: spreads[1].value,
    });
    let mut per = per;
    let s = spreads.into_iter().nth(dominant).expect("non-empty");
    Ok(SubgroupMetricResult {
        metric_id: metric,
        feature_set,
        condition: None,
        subgroup_rates: per.swap_remove(dominant).into_iter().collect(),
        value: s.value,
        most_advantaged: s.max_key,
        most_disadvantaged: s.min_key,
        excluded_subgroups: excluded,
        components,
        strata_breakdown: BTreeMap::new(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::Label;
    use crate::metrics::group::tests::spec;
    use crate::metrics::{demographic_parity, equalized_odds};

    /// Rows of (a protected, b protected, Y, Ŷ).
    fn table(rows: &[(bool, bool, u8, u8)]) -> OutcomeTable {
        OutcomeTable {
            rows: rows
                .iter()
                .enumerate()
                .map(|(i, (a, b, y, yh))| Outcome {
                    id: i as u32 + 1,
                    ground_truth: Label::try_from(*y).unwrap(),
                    predicted: Label::try_from(*yh).unwrap(),
                    probability_good: 0.5,
                    overridden: false,
                    groups: BTreeMap::from([("a".to_string(), *a), ("b".to_string(), *b)]),
                    strata: BTreeMap::new(),
                })
                .collect(),
            group_specs: vec![spec("a"), spec("b")],
            legitimate_specs: vec![],
        }
    }

    /// Subgroup positive rates of 60/40/50/45 percent from 20 rows each.
    fn dp_fixture() -> OutcomeTable {
        let mut rows = Vec::new();
        for ((a, b), pos) in [((true, true), 12), ((true, false), 8), ((false, true), 10), ((false, false), 9)] {
            for i in 0..20 {
                rows.push((a, b, 1, u8::from(i < pos)));
            }
        }
        table(&rows)
    }

    #[test]
    fn dp_max_pairwise_gap() {
        let t = dp_fixture();
        let r = subgroup_metric(&t, MetricId::DemographicParity, &["a", "b"], None).unwrap();
        assert!((r.value - 20.0).abs() < 1e-9);
        assert_eq!(r.most_advantaged.as_deref(), Some("a:protected & b:protected"));
        assert_eq!(r.most_disadvantaged.as_deref(), Some("a:protected & b:unprotected"));
        assert_eq!(r.subgroup_rates.len(), 4);
        assert!(r.excluded_subgroups.is_empty());
        // nested rates here make the subgroup gap dominate the group gap on `a`
        let g = demographic_parity(&t, "a").unwrap();
        assert!(r.value >= g.value);
    }

    #[test]
    fn equal_rates_and_exclusions() {
        let t = table(&[
            (true, true, 1, 1),
            (true, false, 1, 1),
            (false, true, 1, 1),
        ]);
        let r = subgroup_metric(&t, MetricId::DemographicParity, &["a", "b"], None).unwrap();
        assert_eq!(r.value, 0.0);
        assert_eq!(r.most_advantaged, None);
        assert_eq!(r.excluded_subgroups, vec!["a:unprotected & b:unprotected".to_string()]);
    }

    #[test]
    fn too_few_subgroups_and_bad_sets() {
        let t = table(&[(true, true, 1, 1), (true, true, 0, 1)]);
        assert!(matches!(
            subgroup_metric(&t, MetricId::DemographicParity, &["a", "b"], None),
            Err(MetricError::TooFewSubgroups { .. })
        ));
        assert!(matches!(
            subgroup_metric(&t, MetricId::DemographicParity, &["a"], None),
            Err(MetricError::InvalidFeatureSet(_))
        ));
        assert!(matches!(
            subgroup_metric(&t, MetricId::DemographicParity, &["a", "a"], None),
            Err(MetricError::InvalidFeatureSet(_))
        ));
    }

    #[test]
    fn eodds_combines_component_maxima() {
        let t = table(&[
            (true, true, 1, 1),
            (true, true, 0, 0),
            (true, false, 1, 0),
            (true, false, 0, 1),
            (false, true, 1, 1),
            (false, true, 0, 1),
            (false, false, 1, 0),
            (false, false, 0, 0),
        ]);
        let r = subgroup_metric(&t, MetricId::EqualizedOdds, &["a", "b"], None).unwrap();
        let c = r.components.unwrap();
        assert_eq!(c.equal_opportunity, 100.0);
        assert_eq!(c.predictive_equality, 100.0);
        assert_eq!(r.value, 100.0);
        let g = equalized_odds(&t, "a").unwrap();
        assert!(r.value >= g.value);
    }
}
