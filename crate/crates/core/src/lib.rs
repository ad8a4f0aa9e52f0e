//! Fairness exploration over a credit-rating classifier: dataset loading,
//! a logistic-regression model with a held-out fold, eight fairness metrics
//! with thresholds, label what-if edits, and aggregation of stakeholder
//! preferences.

pub mod dataset;
pub mod german;
pub mod metrics;
pub mod model;
pub mod whatif;
pub mod elicitation;
pub mod report;
