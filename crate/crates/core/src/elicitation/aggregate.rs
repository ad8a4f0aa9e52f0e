use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::{ElicitationError, PreferenceRecord, Result, ScopeChoice};
use crate::metrics::MetricId;

/// Points for the first, second and third rank.
pub const RANK_WEIGHTS: [u32; 3] = [3, 2, 1];

/// Borda points for a three-slot ballot.
pub const BORDA_POINTS: [f64; 3] = [2.0, 1.0, 0.0];

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AggregateScore {
    /// Points for every supported metric, zero when never chosen.
    pub scores: BTreeMap<MetricId, u32>,
    pub weights: [u32; 3],
}

impl AggregateScore {
    /// Metrics by descending score, canonical order among equals.
    pub fn ranked(&self) -> Vec<(MetricId, u32)> {
        let mut out: Vec<(MetricId, u32)> = self.scores.iter().map(|(m, s)| (*m, *s)).collect();
        out.sort_by(|a, b| b.1.cmp(&a.1).then(a.0.cmp(&b.0)));
        out
    }
}

fn require(records: &[PreferenceRecord], needed: usize) -> Result<()> {
    if records.len() < needed {
        return Err(ElicitationError::TooFewRecords {
            needed,
            got: records.len(),
        });
    }
    Ok(())
}

pub fn weighted_rank_scores(records: &[PreferenceRecord]) -> Result<AggregateScore> {
    weighted_rank_scores_with(records, RANK_WEIGHTS)
}

/// Every metric in a rank's set receives that rank's full weight.
pub fn weighted_rank_scores_with(
    records: &[PreferenceRecord],
    weights: [u32; 3],
) -> Result<AggregateScore> {
    require(records, 1)?;
    let mut scores: BTreeMap<MetricId, u32> = MetricId::ALL.iter().map(|m| (*m, 0)).collect();
    for rec in records {
        for (rank, set) in rec.ranking.ranks().into_iter().enumerate() {
            for m in set {
                *scores.get_mut(m).expect("all metrics present") += weights[rank];
            }
        }
    }
    Ok(AggregateScore { scores, weights })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BordaTally {
    /// Points of every candidate named on at least one ballot.
    pub tallies: BTreeMap<MetricId, f64>,
    /// Candidates from best to worst; each inner list is a tie.
    pub ranking: Vec<Vec<MetricId>>,
}

impl BordaTally {
    pub fn winners(&self) -> &[MetricId] {
        self.ranking.first().map(Vec::as_slice).unwrap_or(&[])
    }
}

pub fn borda(records: &[PreferenceRecord]) -> Result<BordaTally> {
    borda_with(records, BORDA_POINTS)
}

/// Borda count over the three-slot ballots with the given rank points;
/// tied metrics all receive their rank's points. Tallies within a relative
/// 1e-12 of each other are reported as a tie.
pub fn borda_with(records: &[PreferenceRecord], points: [f64; 3]) -> Result<BordaTally> {
    require(records, 1)?;
    let mut counts: BTreeMap<MetricId, [u32; 3]> = BTreeMap::new();
    for rec in records {
        for (rank, set) in rec.ranking.ranks().into_iter().enumerate() {
            for m in set {
                counts.entry(*m).or_default()[rank] += 1;
            }
        }
    }
    let tallies: BTreeMap<MetricId, f64> = counts
        .iter()
        .map(|(m, c)| (*m, (0..3).map(|r| c[r] as f64 * points[r]).sum()))
        .collect();
    let mut order: Vec<(MetricId, f64)> = tallies.iter().map(|(m, t)| (*m, *t)).collect();
    order.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
    let same = |a: f64, b: f64| (a - b).abs() <= 1e-12 * a.abs().max(b.abs());
    let mut ranking: Vec<Vec<MetricId>> = Vec::new();
    let mut last: Option<f64> = None;
    for (m, t) in order {
        if last.is_some_and(|l| same(l, t)) {
            ranking.last_mut().expect("started").push(m);
        } else {
            ranking.push(vec![m]);
            last = Some(t);
        }
    }
    for tie in &mut ranking {
        tie.sort();
    }
    Ok(BordaTally { tallies, ranking })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub mean: f64,
    /// Sample standard deviation; absent for a single record.
    pub sd: Option<f64>,
}

impl Summary {
    fn of(values: &[f64]) -> Summary {
        let n = values.len() as f64;
        let mean = values.iter().sum::<f64>() / n;
        let sd = (values.len() >= 2).then(|| {
            let ss: f64 = values.iter().map(|v| (v - mean) * (v - mean)).sum();
            (ss / (n - 1.0)).sqrt()
        });
        Summary { mean, sd }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ThresholdStats {
    pub n: usize,
    pub group: Summary,
    pub subgroup: Summary,
    pub individual: Summary,
}

pub fn threshold_stats(records: &[PreferenceRecord]) -> Result<ThresholdStats> {
    require(records, 1)?;
    let col = |f: fn(&PreferenceRecord) -> f64| Summary::of(&records.iter().map(f).collect::<Vec<_>>());
    Ok(ThresholdStats {
        n: records.len(),
        group: col(|r| r.thresholds.group),
        subgroup: col(|r| r.thresholds.subgroup),
        individual: col(|r| r.thresholds.individual),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct CategoryCounts {
    pub individual: usize,
    pub subgroup: usize,
    pub group: usize,
    /// Participants whose top choice is a group metric with a
    /// context-dependent scope; counted in neither group nor subgroup.
    pub context_dependent: usize,
}

/// Which fairness category each participant's top choice falls in.
pub fn top1_category_counts(records: &[PreferenceRecord]) -> Result<CategoryCounts> {
    require(records, 1)?;
    let mut c = CategoryCounts::default();
    for rec in records {
        if rec.ranking.top1.iter().any(|m| m.is_individual()) {
            c.individual += 1;
            continue;
        }
        match rec.scope_choice {
            ScopeChoice::Group => c.group += 1,
            ScopeChoice::Subgroup => c.subgroup += 1,
            ScopeChoice::ContextDependent => c.context_dependent += 1,
        }
    }
    Ok(c)
}

/// How often each metric was a top choice; shared top ranks count for
/// every metric in them. Only chosen metrics appear.
pub fn top1_metric_counts(records: &[PreferenceRecord]) -> BTreeMap<MetricId, usize> {
    let mut out = BTreeMap::new();
    for rec in records {
        for m in &rec.ranking.top1 {
            *out.entry(*m).or_default() += 1;
        }
    }
    out
}

/// Rank weights laid out in canonical metric order.
pub fn preference_vector(record: &PreferenceRecord) -> [f64; 8] {
    let mut v = [0.0; 8];
    for (rank, set) in record.ranking.ranks().into_iter().enumerate() {
        for m in set {
            v[m.index()] = RANK_WEIGHTS[rank] as f64;
        }
    }
    v
}
