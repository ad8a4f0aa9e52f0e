//! Shared fixtures for the integration tests: small random outcome tables
//! and a brute-force counting oracle for the group-family metrics.
#![allow(dead_code)]

use std::collections::BTreeMap;

use fee_core::dataset::{GroupPredicate, Label, LegitimateFeatureSpec, ProtectedGroupSpec};
use fee_core::metrics::{MetricId, Outcome, OutcomeTable};
use proptest::prelude::*;

pub const FEATURES: [&str; 3] = ["a", "b", "c"];
pub const STRATA: [&str; 3] = ["s0", "s1", "s2"];

/// One row: protected flags on a, b, c; Y; Ŷ; stratum index.
pub type RawRow = ([bool; 3], bool, bool, usize);

pub fn raw_rows(max: usize) -> impl Strategy<Value = Vec<RawRow>> {
    prop::collection::vec(
        (any::<[bool; 3]>(), any::<bool>(), any::<bool>(), 0..STRATA.len()),
        1..=max,
    )
}

fn spec(f: &str) -> ProtectedGroupSpec {
    ProtectedGroupSpec {
        feature: f.into(),
        source: format!("{f}_raw"),
        predicate: GroupPredicate::OneOf {
            codes: vec!["p".into()],
        },
        protected_label: format!("{f}+"),
        unprotected_label: format!("{f}-"),
    }
}

pub fn build_table(rows: &[RawRow]) -> OutcomeTable {
    OutcomeTable {
        rows: rows
            .iter()
            .enumerate()
            .map(|(i, (g, y, yh, s))| Outcome {
                id: i as u32 + 1,
                ground_truth: Label::from_bool(*y),
                predicted: Label::from_bool(*yh),
                probability_good: if *yh { 0.75 } else { 0.25 },
                overridden: false,
                groups: FEATURES
                    .iter()
                    .zip(g)
                    .map(|(f, p)| (f.to_string(), *p))
                    .collect(),
                strata: BTreeMap::from([("job".to_string(), STRATA[*s].to_string())]),
            })
            .collect(),
        group_specs: FEATURES.iter().map(|f| spec(f)).collect(),
        legitimate_specs: vec![LegitimateFeatureSpec {
            feature: "job".into(),
            strata: STRATA.iter().map(|s| s.to_string()).collect(),
            edges: None,
        }],
    }
}

/// Denominator and numerator predicates of one rate, on (Y, Ŷ).
#[derive(Clone, Copy)]
enum Component {
    PositiveRate,
    TruePositiveRate,
    FalsePositiveRate,
    Precision,
}

fn in_denominator(c: Component, y: bool, yh: bool) -> bool {
    match c {
        Component::PositiveRate => true,
        Component::TruePositiveRate => y,
        Component::FalsePositiveRate => !y,
        Component::Precision => yh,
    }
}

fn in_numerator(c: Component, y: bool, yh: bool) -> bool {
    in_denominator(c, y, yh)
        && match c {
            Component::Precision => y,
            _ => yh,
        }
}

fn components(metric: MetricId) -> Vec<Component> {
    match metric {
        MetricId::DemographicParity | MetricId::ConditionalStatisticalParity => {
            vec![Component::PositiveRate]
        }
        MetricId::EqualOpportunity => vec![Component::TruePositiveRate],
        MetricId::PredictiveEquality => vec![Component::FalsePositiveRate],
        MetricId::EqualizedOdds => vec![Component::TruePositiveRate, Component::FalsePositiveRate],
        MetricId::OutcomeTest => vec![Component::Precision],
        _ => panic!("not a group metric"),
    }
}

/// Percentage rate among rows matching `member`, counted one row at a time.
fn rate(rows: &[RawRow], member: &dyn Fn(&RawRow) -> bool, c: Component) -> Option<f64> {
    let mut num = 0u32;
    let mut den = 0u32;
    for r in rows {
        if member(r) && in_denominator(c, r.1, r.2) {
            den += 1;
            if in_numerator(c, r.1, r.2) {
                num += 1;
            }
        }
    }
    if den == 0 {
        None
    } else {
        Some(100.0 * num as f64 / den as f64)
    }
}

/// Largest |r_i − r_j| over all pairs of cells whose every component is
/// defined; None with fewer than two such cells.
fn max_pairwise(rows: &[RawRow], cells: &[Vec<(usize, bool)>], comps: &[Component]) -> Option<f64> {
    let mut valid: Vec<Vec<f64>> = Vec::new();
    for cell in cells {
        let member = |r: &RawRow| cell.iter().all(|(f, p)| r.0[*f] == *p);
        let rates: Option<Vec<f64>> = comps.iter().map(|c| rate(rows, &member, *c)).collect();
        if let Some(rs) = rates {
            valid.push(rs);
        }
    }
    if valid.len() < 2 {
        return None;
    }
    let mut best = 0.0f64;
    for k in 0..comps.len() {
        for i in 0..valid.len() {
            for j in 0..valid.len() {
                best = best.max((valid[i][k] - valid[j][k]).abs());
            }
        }
    }
    Some(best)
}

/// Every assignment of protected flags to the given feature indices.
fn all_cells(features: &[usize]) -> Vec<Vec<(usize, bool)>> {
    let mut out = vec![Vec::new()];
    for f in features {
        out = out
            .into_iter()
            .flat_map(|prefix: Vec<(usize, bool)>| {
                [true, false].map(|p| {
                    let mut v = prefix.clone();
                    v.push((*f, p));
                    v
                })
            })
            .collect();
    }
    out
}

/// Oracle value of a group (one feature) or subgroup (2–3 features) metric.
/// Conditional statistical parity is taken over the `job` strata.
pub fn oracle(rows: &[RawRow], metric: MetricId, features: &[usize]) -> Option<f64> {
    let cells = all_cells(features);
    let comps = components(metric);
    if metric == MetricId::ConditionalStatisticalParity {
        let mut best: Option<f64> = None;
        for s in 0..STRATA.len() {
            let within: Vec<RawRow> = rows.iter().copied().filter(|r| r.3 == s).collect();
            if let Some(v) = max_pairwise(&within, &cells, &comps) {
                best = Some(best.map_or(v, |b: f64| b.max(v)));
            }
        }
        return best;
    }
    max_pairwise(rows, &cells, &comps)
}
