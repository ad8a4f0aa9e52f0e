//! Flat metric reports with verdicts, and the full audit over a trained
//! model.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::dataset::Dataset;
use crate::metrics::{
    consistency, counterfactual_fairness, group_metric, subgroup_metric, verdict, Category,
    MetricError, MetricId, MetricResult, OutcomeTable, ThresholdConfig, Verdict,
    DEFAULT_NEIGHBORS,
};
use crate::model::{PerformanceSummary, TrainedModel};

/// Rounds a percentage to one decimal for display.
pub fn round1(x: f64) -> f64 {
    (x * 10.0).round() / 10.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub metric_id: MetricId,
    pub scope: Category,
    pub features: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub condition: Option<String>,
    pub value_pct: f64,
    pub breakdown: BTreeMap<String, f64>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub excluded: Vec<String>,
    /// Judged on the unrounded value.
    pub verdict: Verdict,
}

impl MetricReport {
    pub fn from_result(result: &MetricResult, thresholds: &ThresholdConfig) -> Self {
        let scope = result.category();
        let v = verdict(scope, result.value(), thresholds);
        let (features, condition, breakdown, excluded) = match result {
            MetricResult::Group(g) => {
                let mut b = BTreeMap::new();
                b.insert(g.protected_label.clone(), round1(g.rate_protected));
                b.insert(g.unprotected_label.clone(), round1(g.rate_unprotected));
                (vec![g.feature.clone()], g.condition.clone(), b, g.excluded_strata.clone())
            }
            MetricResult::Subgroup(s) => (
                s.feature_set.clone(),
                s.condition.clone(),
                s.subgroup_rates.iter().map(|(k, r)| (k.clone(), round1(*r))).collect(),
                s.excluded_subgroups.clone(),
            ),
            MetricResult::Counterfactual(c) => (
                vec![c.protected_feature.clone()],
                None,
                BTreeMap::from([
                    ("instances".to_string(), c.n as f64),
                    ("violations".to_string(), c.violating_ids.len() as f64),
                ]),
                Vec::new(),
            ),
            MetricResult::Consistency(c) => (
                Vec::new(),
                None,
                BTreeMap::from([
                    ("instances".to_string(), c.per_instance.len() as f64),
                    ("neighbors".to_string(), c.n_neighbors as f64),
                ]),
                Vec::new(),
            ),
        };
        MetricReport {
            metric_id: result.metric_id(),
            scope,
            features,
            condition,
            value_pct: round1(result.value()),
            breakdown,
            excluded,
            verdict: v,
        }
    }
}

/// A metric that could not be computed on this data.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SkippedMetric {
    pub metric_id: MetricId,
    pub scope: Category,
    pub features: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub condition: Option<String>,
    pub reason: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AuditReport {
    pub dataset_fingerprint: String,
    pub thresholds: ThresholdConfig,
    pub performance: PerformanceSummary,
    pub results: Vec<MetricReport>,
    pub skipped: Vec<SkippedMetric>,
    pub fair: usize,
    pub unfair: usize,
}

impl AuditReport {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AuditOptions<'a> {
    /// Protected features (derived group names or their source columns).
    pub features: &'a [&'a str],
    /// Legitimate features conditional statistical parity is run under;
    /// empty means the first declared one.
    pub conditions: &'a [&'a str],
    pub thresholds: ThresholdConfig,
    pub neighbors: usize,
}

/// Every applicable metric for the listed features: the six group metrics
/// per feature, the same six over every 2- and 3-feature combination,
/// counterfactual flips per feature and the consistency score.
pub fn audit(
    model: &TrainedModel,
    dataset: &Dataset,
    opts: &AuditOptions<'_>,
) -> Result<AuditReport, MetricError> {
    opts.thresholds.validate().map_err(MetricError::InvalidThresholds)?;
    let features = opts
        .features
        .iter()
        .map(|f| {
            dataset
                .resolve_group(f)
                .map(|s| s.feature.clone())
                .map_err(|_| MetricError::UnknownGroup(f.to_string()))
        })
        .collect::<Result<Vec<_>, _>>()?;
    let conditions: Vec<String> = if opts.conditions.is_empty() {
        dataset
            .legitimate_specs
            .first()
            .map(|l| vec![l.feature.clone()])
            .unwrap_or_default()
    } else {
        opts.conditions
            .iter()
            .map(|c| {
                dataset
                    .legitimate_spec(c)
                    .map(|l| l.feature.clone())
                    .ok_or_else(|| MetricError::UnknownLegitimate(c.to_string()))
            })
            .collect::<Result<_, _>>()?
    };
    let table = OutcomeTable::for_model(model, dataset)?;
    let mut results = Vec::new();
    let mut skipped = Vec::new();
    let mut push = |r: Result<MetricResult, MetricError>,
                    metric: MetricId,
                    scope: Category,
                    features: Vec<String>,
                    condition: Option<String>| match r {
        Ok(r) => results.push(MetricReport::from_result(&r, &opts.thresholds)),
        Err(e) => skipped.push(SkippedMetric {
            metric_id: metric,
            scope,
            features,
            condition,
            reason: e.to_string(),
        }),
    };

    let runs = |metric: MetricId| -> Vec<Option<&str>> {
        if metric == MetricId::ConditionalStatisticalParity {
            conditions.iter().map(|c| Some(c.as_str())).collect()
        } else {
            vec![None]
        }
    };

    for f in &features {
        for m in MetricId::GROUP_FAMILY {
            for c in runs(m) {
                let r = group_metric(&table, m, f, c).map(MetricResult::Group);
                push(r, m, Category::Group, vec![f.clone()], c.map(str::to_string));
            }
        }
    }
    for combo in combinations(&features) {
        let names: Vec<&str> = combo.iter().map(|s| s.as_str()).collect();
        for m in MetricId::GROUP_FAMILY {
            for c in runs(m) {
                let r = subgroup_metric(&table, m, &names, c).map(MetricResult::Subgroup);
                push(r, m, Category::Subgroup, combo.clone(), c.map(str::to_string));
            }
        }
    }
    for f in &features {
        let r = counterfactual_fairness(model, dataset, f).map(MetricResult::Counterfactual);
        push(r, MetricId::CounterfactualFairness, Category::Individual, vec![f.clone()], None);
    }
    let r = consistency(model, dataset, opts.neighbors).map(MetricResult::Consistency);
    push(r, MetricId::Consistency, Category::Individual, Vec::new(), None);

    let fair = results.iter().filter(|r| r.verdict == Verdict::Fair).count();
    Ok(AuditReport {
        dataset_fingerprint: dataset.fingerprint(),
        thresholds: opts.thresholds,
        performance: table.performance(),
        unfair: results.len() - fair,
        fair,
        results,
        skipped,
    })
}

impl Default for AuditOptions<'_> {
    fn default() -> Self {
        AuditOptions {
            features: &[],
            conditions: &[],
            thresholds: ThresholdConfig::default(),
            neighbors: DEFAULT_NEIGHBORS,
        }
    }
}

/// All 2- and 3-element combinations, in input order.
fn combinations(items: &[String]) -> Vec<Vec<String>> {
    let n = items.len();
    let mut out = Vec::new();
    for i in 0..n {
        for j in i + 1..n {
            out.push(vec![items[i].clone(), items[j].clone()]);
        }
    }
    for i in 0..n {
        for j in i + 1..n {
            for k in j + 1..n {
                out.push(vec![items[i].clone(), items[j].clone(), items[k].clone()]);
            }
        }
    }
    out
}
