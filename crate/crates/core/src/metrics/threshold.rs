use serde::{Deserialize, Serialize};

use super::MetricResult;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Category {
    Group,
    Subgroup,
    Individual,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Verdict {
    Fair,
    Unfair,
}

/// Per-category tolerances, in percent. Group and subgroup results are
/// fair at or below their threshold; individual results at or above it.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ThresholdConfig {
    pub group: f64,
    pub subgroup: f64,
    pub individual: f64,
}

impl Default for ThresholdConfig {
    fn default() -> Self {
        ThresholdConfig {
            group: 10.0,
            subgroup: 10.0,
            individual: 95.0,
        }
    }
}

impl ThresholdConfig {
    pub fn validate(&self) -> Result<(), String> {
        for (name, v) in [
            ("group", self.group),
            ("subgroup", self.subgroup),
            ("individual", self.individual),
        ] {
            if !(0.0..=100.0).contains(&v) {
                return Err(format!("{name} threshold {v} is outside [0, 100]"));
            }
        }
        Ok(())
    }

    pub fn for_category(&self, category: Category) -> f64 {
        match category {
            Category::Group => self.group,
            Category::Subgroup => self.subgroup,
            Category::Individual => self.individual,
        }
    }
}

pub fn verdict(category: Category, value: f64, config: &ThresholdConfig) -> Verdict {
    let threshold = config.for_category(category);
    let fair = match category {
        Category::Group | Category::Subgroup => value <= threshold,
        Category::Individual => value >= threshold,
    };
    if fair {
        Verdict::Fair
    } else {
        Verdict::Unfair
    }
}

/// Verdicts aligned with `results`.
pub fn evaluate_thresholds(results: &[MetricResult], config: &ThresholdConfig) -> Vec<Verdict> {
    results
        .iter()
        .map(|r| verdict(r.category(), r.value(), config))
        .collect()
}
