//! Group, subgroup and individual fairness metrics over the held-out fold.
//!
//! Group metrics compare a conditional positive rate between the protected
//! and unprotected side of one protected feature and report the absolute
//! difference as a percentage (0 = parity). Subgroup metrics apply the same
//! rates to the cross product of two or three protected features and report
//! the largest pairwise gap. Individual metrics (counterfactual flips and
//! nearest-neighbour consistency) report a percentage where 100 is fair.

mod explain;
pub(crate) mod group;
mod individual;
mod outcome;
mod subgroup;
mod threshold;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use explain::{explanation_buckets, Bucket, BucketPredicate, ExplanationBuckets};
pub use group::{
    conditional_statistical_parity, demographic_parity, equal_opportunity, equalized_odds,
    group_metric, outcome_test, predictive_equality, Fraction, GroupMetricResult,
    OddsComponents, StratumDifference,
};
pub use individual::{
    consistency, consistency_of_points, counterfactual_fairness, counterfactual_on,
    ConsistencyResult, CounterfactualResult, DEFAULT_NEIGHBORS,
};
pub use outcome::{Outcome, OutcomeTable};
pub use subgroup::{subgroup_metric, SubgroupMetricResult};
pub use threshold::{evaluate_thresholds, verdict, Category, ThresholdConfig, Verdict};

use crate::model::ModelError;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MetricError {
    #[error("{metric}: empty denominator for {group} ({condition})")]
    EmptyDenominator {
        metric: MetricId,
        group: String,
        condition: String,
    },
    #[error("unknown protected group `{0}`")]
    UnknownGroup(String),
    #[error("unknown legitimate feature `{0}`")]
    UnknownLegitimate(String),
    #[error("stratum `{stratum}` is not declared for `{feature}`")]
    UndeclaredStratum { feature: String, stratum: String },
    #[error("conditional statistical parity needs a legitimate feature")]
    MissingCondition,
    #[error("{metric}: no stratum of `{feature}` has both groups represented")]
    NoValidStratum { metric: MetricId, feature: String },
    #[error("{metric}: fewer than two subgroups have a non-empty denominator")]
    TooFewSubgroups { metric: MetricId },
    #[error("subgroup metrics need 2 or 3 distinct protected features, got {0:?}")]
    InvalidFeatureSet(Vec<String>),
    #[error("{0} is an individual-fairness metric")]
    NotGroupMetric(MetricId),
    #[error("counterfactual flips need a binary protected column the model encodes; `{0}` is not one")]
    UnsupportedCounterfactual(String),
    #[error("consistency needs more than {k} instances, got {n}")]
    TooFewInstances { n: usize, k: usize },
    #[error("instance {0} is unknown")]
    UnknownInstance(u32),
    #[error("model: {0}")]
    Model(String),
    #[error("invalid thresholds: {0}")]
    InvalidThresholds(String),
}

impl From<ModelError> for MetricError {
    fn from(e: ModelError) -> Self {
        MetricError::Model(e.to_string())
    }
}

pub type Result<T, E = MetricError> = std::result::Result<T, E>;

/// The eight supported fairness metrics, in canonical order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum MetricId {
    #[serde(rename = "DP")]
    DemographicParity,
    #[serde(rename = "EOpp")]
    EqualOpportunity,
    #[serde(rename = "PE")]
    PredictiveEquality,
    #[serde(rename = "EOdds")]
    EqualizedOdds,
    #[serde(rename = "OT")]
    OutcomeTest,
    #[serde(rename = "CSP")]
    ConditionalStatisticalParity,
    #[serde(rename = "CF")]
    CounterfactualFairness,
    #[serde(rename = "Consistency")]
    Consistency,
}

impl MetricId {
    pub const ALL: [MetricId; 8] = [
        MetricId::DemographicParity,
        MetricId::EqualOpportunity,
        MetricId::PredictiveEquality,
        MetricId::EqualizedOdds,
        MetricId::OutcomeTest,
        MetricId::ConditionalStatisticalParity,
        MetricId::CounterfactualFairness,
        MetricId::Consistency,
    ];

    /// Metrics defined as a rate comparison between groups.
    pub const GROUP_FAMILY: [MetricId; 6] = [
        MetricId::DemographicParity,
        MetricId::EqualOpportunity,
        MetricId::PredictiveEquality,
        MetricId::EqualizedOdds,
        MetricId::OutcomeTest,
        MetricId::ConditionalStatisticalParity,
    ];

    pub fn code(self) -> &'static str {
        match self {
            MetricId::DemographicParity => "DP",
            MetricId::EqualOpportunity => "EOpp",
            MetricId::PredictiveEquality => "PE",
            MetricId::EqualizedOdds => "EOdds",
            MetricId::OutcomeTest => "OT",
            MetricId::ConditionalStatisticalParity => "CSP",
            MetricId::CounterfactualFairness => "CF",
            MetricId::Consistency => "Consistency",
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            MetricId::DemographicParity => "Demographic Parity",
            MetricId::EqualOpportunity => "Equal Opportunity",
            MetricId::PredictiveEquality => "Predictive Equality",
            MetricId::EqualizedOdds => "Equalized Odds",
            MetricId::OutcomeTest => "Outcome Test",
            MetricId::ConditionalStatisticalParity => "Conditional Statistical Parity",
            MetricId::CounterfactualFairness => "Counterfactual Fairness",
            MetricId::Consistency => "Consistency",
        }
    }

    pub fn is_individual(self) -> bool {
        matches!(
            self,
            MetricId::CounterfactualFairness | MetricId::Consistency
        )
    }

    /// Position in the canonical order.
    pub fn index(self) -> usize {
        self as usize
    }
}

impl fmt::Display for MetricId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.code())
    }
}

impl FromStr for MetricId {
    type Err = String;

    /// Accepts the short code or the full name, case-insensitively.
    fn from_str(s: &str) -> std::result::Result<Self, String> {
        let norm = |x: &str| {
            x.chars()
                .filter(|c| c.is_ascii_alphanumeric())
                .collect::<String>()
                .to_ascii_lowercase()
        };
        let wanted = norm(s);
        MetricId::ALL
            .into_iter()
            .find(|m| norm(m.code()) == wanted || norm(m.name()) == wanted)
            .ok_or_else(|| format!("unsupported metric `{s}`"))
    }
}

/// Any metric result, tagged with its scope.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "scope", rename_all = "snake_case")]
pub enum MetricResult {
    Group(GroupMetricResult),
    Subgroup(SubgroupMetricResult),
    Counterfactual(CounterfactualResult),
    Consistency(ConsistencyResult),
}

impl MetricResult {
    pub fn metric_id(&self) -> MetricId {
        match self {
            MetricResult::Group(r) => r.metric_id,
            MetricResult::Subgroup(r) => r.metric_id,
            MetricResult::Counterfactual(_) => MetricId::CounterfactualFairness,
            MetricResult::Consistency(_) => MetricId::Consistency,
        }
    }

    pub fn category(&self) -> Category {
        match self {
            MetricResult::Group(_) => Category::Group,
            MetricResult::Subgroup(_) => Category::Subgroup,
            MetricResult::Counterfactual(_) | MetricResult::Consistency(_) => Category::Individual,
        }
    }

    /// Headline percentage.
    pub fn value(&self) -> f64 {
        match self {
            MetricResult::Group(r) => r.value,
            MetricResult::Subgroup(r) => r.value,
            MetricResult::Counterfactual(r) => r.cfr,
            MetricResult::Consistency(r) => r.score,
        }
    }
}
