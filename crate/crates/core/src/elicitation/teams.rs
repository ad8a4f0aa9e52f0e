use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::{preference_vector, ElicitationError, PreferenceRecord, Result};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TeamAssignment {
    /// Participants grouped by preference similarity, in record order.
    pub clusters: Vec<Vec<String>>,
    /// Team rosters, indexed by team number from 0.
    pub teams: Vec<Vec<String>>,
}

impl TeamAssignment {
    pub fn team_of(&self, participant: &str) -> Option<usize> {
        self.teams
            .iter()
            .position(|t| t.iter().any(|p| p == participant))
    }

    pub fn by_participant(&self) -> BTreeMap<String, usize> {
        self.teams
            .iter()
            .enumerate()
            .flat_map(|(i, t)| t.iter().map(move |p| (p.clone(), i)))
            .collect()
    }
}

pub fn cosine_distance(a: &[f64], b: &[f64]) -> f64 {
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    let na = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    if na == 0.0 || nb == 0.0 {
        return 1.0;
    }
    (1.0 - dot / (na * nb)).max(0.0)
}

/// Average-linkage agglomerative clustering over cosine distance, stopping
/// at `k` clusters. Equal distances merge the pair that comes first in
/// record order.
fn cluster(vectors: &[[f64; 8]], k: usize) -> Vec<Vec<usize>> {
    let n = vectors.len();
    let mut d = vec![vec![0.0; n]; n];
    for i in 0..n {
        for j in i + 1..n {
            let v = cosine_distance(&vectors[i], &vectors[j]);
            d[i][j] = v;
            d[j][i] = v;
        }
    }
    let mut clusters: Vec<Vec<usize>> = (0..n).map(|i| vec![i]).collect();
    while clusters.len() > k {
        let mut best: Option<(f64, usize, usize)> = None;
        for a in 0..clusters.len() {
            for b in a + 1..clusters.len() {
                let total: f64 = clusters[a]
                    .iter()
                    .flat_map(|i| clusters[b].iter().map(move |j| (i, j)))
                    .map(|(i, j)| d[*i][*j])
                    .sum();
                let avg = total / (clusters[a].len() * clusters[b].len()) as f64;
                if best.is_none_or(|(v, _, _)| avg < v) {
                    best = Some((avg, a, b));
                }
            }
        }
        let (_, a, b) = best.expect("more than k clusters");
        let merged = clusters.remove(b);
        clusters[a].extend(merged);
        clusters[a].sort_unstable();
    }
    clusters.sort_by_key(|c| c[0]);
    clusters
}

/// Splits participants into `team_count` teams so that similar preferences
/// are spread apart: records are clustered by preference vector, then each
/// cluster's members are dealt round-robin, the dealing position carrying
/// over from one cluster to the next.
pub fn assign_teams(records: &[PreferenceRecord], team_count: usize) -> Result<TeamAssignment> {
    if team_count < 2 {
        return Err(ElicitationError::TeamCount(team_count));
    }
    if records.len() < team_count {
        return Err(ElicitationError::TooFewRecords {
            needed: team_count,
            got: records.len(),
        });
    }
    let vectors: Vec<[f64; 8]> = records.iter().map(preference_vector).collect();
    let groups = cluster(&vectors, team_count);
    let mut teams = vec![Vec::new(); team_count];
    let mut cursor = 0;
    for g in &groups {
        for i in g {
            teams[cursor % team_count].push(records[*i].participant_id.clone());
            cursor += 1;
        }
    }
    let clusters = groups
        .iter()
        .map(|g| g.iter().map(|i| records[*i].participant_id.clone()).collect())
        .collect();
    Ok(TeamAssignment { clusters, teams })
}
