//! Stakeholder preference records and their team-level aggregation.
//!
//! Each participant submits a [`PreferenceRecord`]: a ranked top-three
//! list of metrics (ties allowed within a rank), fairness thresholds and a
//! group-versus-subgroup scope choice. Records are aggregated with weighted
//! rank points, Borda tallies and threshold statistics, and clustered into
//! teams of mixed preferences.

mod aggregate;
mod store;
mod teams;

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::metrics::{Category, MetricId, ThresholdConfig};

pub use aggregate::{
    borda, borda_with, preference_vector, threshold_stats, top1_category_counts,
    top1_metric_counts, weighted_rank_scores, weighted_rank_scores_with, AggregateScore,
    BordaTally, CategoryCounts, Summary, ThresholdStats, BORDA_POINTS, RANK_WEIGHTS,
};
pub use store::{to_csv, ElicitationStore, ParticipantHistory, StoredPreference};
pub use teams::{assign_teams, cosine_distance, TeamAssignment};

/// Reference fixture: eighteen recorded stakeholder preferences.
pub const REFERENCE_RECORDS: &str = include_str!("../../data/preferences.json");

pub fn reference_records() -> Vec<PreferenceRecord> {
    serde_json::from_str(REFERENCE_RECORDS).expect("bundled preference fixture parses")
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ElicitationError {
    #[error("{0} appears at more than one rank")]
    DuplicateMetric(MetricId),
    #[error("the top rank must name at least one metric")]
    EmptyTopRank,
    #[error("rank 3 is filled while rank 2 is empty")]
    RankGap,
    #[error("participant id must not be empty")]
    EmptyParticipant,
    #[error("{0}")]
    Threshold(String),
    #[error("at least {needed} records are required, got {got}")]
    TooFewRecords { needed: usize, got: usize },
    #[error("team count must be at least 2, got {0}")]
    TeamCount(usize),
    #[error("unknown participant `{0}`")]
    UnknownParticipant(String),
    #[error("team id must not be empty")]
    EmptyTeam,
    #[error("team `{0}` has no members")]
    NoMembers(String),
    #[error("consensus list is empty")]
    EmptyConsensus,
    #[error("{metric} cannot be agreed at {scope:?} scope")]
    ScopeMismatch { metric: MetricId, scope: Category },
    #[error("{0} is listed twice in the consensus")]
    DuplicateConsensus(MetricId),
    #[error("team `{0}` is finalized and can no longer change")]
    Finalized(String),
    #[error("unknown team `{0}`")]
    UnknownTeam(String),
}

pub type Result<T, E = ElicitationError> = std::result::Result<T, E>;

/// Top-three metric choice. A rank holds a set so that equally preferred
/// metrics can share it; lower ranks may be left empty.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct RankedList {
    pub top1: BTreeSet<MetricId>,
    #[serde(default)]
    pub top2: BTreeSet<MetricId>,
    #[serde(default)]
    pub top3: BTreeSet<MetricId>,
}

impl RankedList {
    pub fn new(
        top1: impl IntoIterator<Item = MetricId>,
        top2: impl IntoIterator<Item = MetricId>,
        top3: impl IntoIterator<Item = MetricId>,
    ) -> Result<Self> {
        let list = RankedList {
            top1: top1.into_iter().collect(),
            top2: top2.into_iter().collect(),
            top3: top3.into_iter().collect(),
        };
        list.validate()?;
        Ok(list)
    }

    /// Single-metric ranks, `a > b > c`.
    pub fn simple(a: MetricId, b: MetricId, c: MetricId) -> Result<Self> {
        Self::new([a], [b], [c])
    }

    pub fn validate(&self) -> Result<()> {
        if self.top1.is_empty() {
            return Err(ElicitationError::EmptyTopRank);
        }
        if self.top2.is_empty() && !self.top3.is_empty() {
            return Err(ElicitationError::RankGap);
        }
        let mut seen = BTreeSet::new();
        for m in self.ranks().into_iter().flatten() {
            if !seen.insert(*m) {
                return Err(ElicitationError::DuplicateMetric(*m));
            }
        }
        Ok(())
    }

    pub fn ranks(&self) -> [&BTreeSet<MetricId>; 3] {
        [&self.top1, &self.top2, &self.top3]
    }

    /// 1-based rank of a metric, if chosen.
    pub fn rank_of(&self, metric: MetricId) -> Option<usize> {
        self.ranks()
            .iter()
            .position(|r| r.contains(&metric))
            .map(|i| i + 1)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScopeChoice {
    Group,
    Subgroup,
    ContextDependent,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PreferenceRecord {
    pub participant_id: String,
    pub ranking: RankedList,
    pub thresholds: ThresholdConfig,
    pub scope_choice: ScopeChoice,
    #[serde(default)]
    pub feature_concern: BTreeSet<String>,
}

impl PreferenceRecord {
    pub fn validate(&self) -> Result<()> {
        if self.participant_id.trim().is_empty() {
            return Err(ElicitationError::EmptyParticipant);
        }
        self.ranking.validate()?;
        self.thresholds
            .validate()
            .map_err(ElicitationError::Threshold)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConsensusItem {
    pub metric_id: MetricId,
    pub scope: Category,
}

impl ConsensusItem {
    pub fn new(metric_id: MetricId, scope: Category) -> Self {
        ConsensusItem { metric_id, scope }
    }
}

/// A team's negotiated outcome; consensus items are in priority order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TeamSession {
    pub team_id: String,
    pub member_ids: Vec<String>,
    pub consensus: Vec<ConsensusItem>,
    #[serde(default)]
    pub notes: String,
    #[serde(default)]
    pub finalized: bool,
}

impl TeamSession {
    /// Checks everything that does not depend on stored participants.
    pub fn validate(&self) -> Result<()> {
        if self.team_id.trim().is_empty() {
            return Err(ElicitationError::EmptyTeam);
        }
        if self.member_ids.is_empty() {
            return Err(ElicitationError::NoMembers(self.team_id.clone()));
        }
        if self.consensus.is_empty() {
            return Err(ElicitationError::EmptyConsensus);
        }
        let mut seen = BTreeSet::new();
        for item in &self.consensus {
            let individual_scope = item.scope == Category::Individual;
            if item.metric_id.is_individual() != individual_scope {
                return Err(ElicitationError::ScopeMismatch {
                    metric: item.metric_id,
                    scope: item.scope,
                });
            }
            if !seen.insert(item.metric_id) {
                return Err(ElicitationError::DuplicateConsensus(item.metric_id));
            }
        }
        Ok(())
    }
}
