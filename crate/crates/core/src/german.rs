//! Loader for the canonical space-delimited German Credit file
//! (`german.data`: 20 attribute codes followed by the target, 1 = Good,
//! 2 = Bad).

use std::collections::BTreeMap;
use std::io::Read;
use std::path::Path;

use crate::dataset::{
    Dataset, DatasetError, DatasetMapping, FeatureKind, FeatureSpec, GroupPredicate, Instance,
    Label, LegitimateFeatureSpec, ProtectedGroupSpec, Result, Value,
};

/// The bundled 1000-row German Credit file.
pub const BUNDLED_DATA: &str = include_str!("../data/german.data");

/// Attribute schema in file column order.
pub fn schema() -> Vec<FeatureSpec> {
    vec![
        FeatureSpec::categorical(
            "checking_status",
            &[
                ("A11", "< 0 DM"),
                ("A12", "0 <= ... < 200 DM"),
                ("A13", ">= 200 DM / salary assignment"),
                ("A14", "no checking account"),
            ],
        ),
        FeatureSpec::numeric("duration"),
        FeatureSpec::categorical(
            "credit_history",
            &[
                ("A30", "no credits taken / all paid back duly"),
                ("A31", "all credits at this bank paid back duly"),
                ("A32", "existing credits paid back duly till now"),
                ("A33", "delay in paying off in the past"),
                ("A34", "critical account / other credits existing"),
            ],
        ),
        FeatureSpec::categorical(
            "purpose",
            &[
                ("A40", "car (new)"),
                ("A41", "car (used)"),
                ("A42", "furniture/equipment"),
                ("A43", "radio/television"),
                ("A44", "domestic appliances"),
                ("A45", "repairs"),
                ("A46", "education"),
                ("A47", "vacation"),
                ("A48", "retraining"),
                ("A49", "business"),
                ("A410", "others"),
            ],
        ),
        FeatureSpec::numeric("credit_amount"),
        FeatureSpec::categorical(
            "savings",
            &[
                ("A61", "< 100 DM"),
                ("A62", "100 <= ... < 500 DM"),
                ("A63", "500 <= ... < 1000 DM"),
                ("A64", ">= 1000 DM"),
                ("A65", "unknown / no savings account"),
            ],
        ),
        FeatureSpec::categorical(
            "employment",
            &[
                ("A71", "unemployed"),
                ("A72", "< 1 year"),
                ("A73", "1 <= ... < 4 years"),
                ("A74", "4 <= ... < 7 years"),
                ("A75", ">= 7 years"),
            ],
        ),
        FeatureSpec::numeric("installment_rate"),
        FeatureSpec::categorical(
            "personal_status",
            &[
                ("A91", "male: divorced/separated"),
                ("A92", "female: divorced/separated/married"),
                ("A93", "male: single"),
                ("A94", "male: married/widowed"),
                ("A95", "female: single"),
            ],
        ),
        FeatureSpec::categorical(
            "other_debtors",
            &[("A101", "none"), ("A102", "co-applicant"), ("A103", "guarantor")],
        ),
        FeatureSpec::numeric("residence_since"),
        FeatureSpec::categorical(
            "property",
            &[
                ("A121", "real estate"),
                ("A122", "building society savings / life insurance"),
                ("A123", "car or other"),
                ("A124", "unknown / no property"),
            ],
        ),
        FeatureSpec::numeric("age"),
        FeatureSpec::categorical(
            "other_installment_plans",
            &[("A141", "bank"), ("A142", "stores"), ("A143", "none")],
        ),
        FeatureSpec::categorical(
            "housing",
            &[("A151", "rent"), ("A152", "own"), ("A153", "for free")],
        ),
        FeatureSpec::numeric("existing_credits"),
        FeatureSpec::categorical(
            "job",
            &[
                ("A171", "unemployed / unskilled non-resident"),
                ("A172", "unskilled resident"),
                ("A173", "skilled employee / official"),
                ("A174", "management / self-employed / highly qualified"),
            ],
        ),
        FeatureSpec::numeric("num_dependents"),
        FeatureSpec::categorical(
            "telephone",
            &[("A191", "none"), ("A192", "yes, registered")],
        ),
        FeatureSpec::categorical("foreign_worker_status", &[("A201", "yes"), ("A202", "no")]),
    ]
}

/// Protected groups (age < 25, female, foreign worker) and the four
/// legitimate features job, savings, employment and credit history.
pub fn default_mapping() -> DatasetMapping {
    let schema = schema();
    let codes = |name: &str| {
        schema
            .iter()
            .find(|f| f.name == name)
            .map(|f| f.categories.clone())
            .unwrap_or_default()
    };
    DatasetMapping {
        protected: vec![
            ProtectedGroupSpec {
                feature: "age_group".into(),
                source: "age".into(),
                predicate: GroupPredicate::LessThan { value: 25.0 },
                protected_label: "age < 25".into(),
                unprotected_label: "age >= 25".into(),
            },
            ProtectedGroupSpec {
                feature: "gender".into(),
                source: "personal_status".into(),
                predicate: GroupPredicate::OneOf {
                    codes: vec!["A92".into(), "A95".into()],
                },
                protected_label: "female".into(),
                unprotected_label: "male".into(),
            },
            ProtectedGroupSpec {
                feature: "foreign_worker".into(),
                source: "foreign_worker_status".into(),
                predicate: GroupPredicate::OneOf {
                    codes: vec!["A201".into()],
                },
                protected_label: "foreign worker".into(),
                unprotected_label: "non-foreign worker".into(),
            },
        ],
        legitimate: ["job", "savings", "employment", "credit_history"]
            .iter()
            .map(|f| LegitimateFeatureSpec {
                feature: f.to_string(),
                strata: codes(f),
                edges: None,
            })
            .collect(),
    }
}

/// Parses the raw file. Blank lines are ignored; every other line must hold
/// exactly 21 whitespace-separated fields.
pub fn load_german_credit<R: Read>(mut raw: R, mapping: DatasetMapping) -> Result<Dataset> {
    let mut text = String::new();
    raw.read_to_string(&mut text)?;
    let schema = schema();
    let expected = schema.len() + 1;
    let mut instances = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        let line_no = lineno + 1;
        let fields: Vec<&str> = line.split_whitespace().collect();
        if fields.is_empty() {
            continue;
        }
        if fields.len() != expected {
            return Err(DatasetError::MalformedRow {
                line: line_no,
                expected,
                found: fields.len(),
            });
        }
        let mut values = BTreeMap::new();
        for (spec, raw) in schema.iter().zip(&fields) {
            let value = match spec.kind {
                FeatureKind::Categorical => {
                    if !spec.categories.iter().any(|c| c == raw) {
                        return Err(DatasetError::UnknownCategory {
                            line: line_no,
                            feature: spec.name.clone(),
                            code: raw.to_string(),
                        });
                    }
                    Value::Category(raw.to_string())
                }
                FeatureKind::Numeric => {
                    let n: f64 = raw.parse().map_err(|_| DatasetError::InvalidNumber {
                        line: line_no,
                        feature: spec.name.clone(),
                        raw: raw.to_string(),
                    })?;
                    if !n.is_finite() {
                        return Err(DatasetError::InvalidNumber {
                            line: line_no,
                            feature: spec.name.clone(),
                            raw: raw.to_string(),
                        });
                    }
                    Value::Number(n)
                }
            };
            values.insert(spec.name.clone(), value);
        }
        let ground_truth = match fields[expected - 1] {
            "1" => Label::Good,
            "2" => Label::Bad,
            other => {
                return Err(DatasetError::InvalidTarget {
                    line: line_no,
                    raw: other.to_string(),
                })
            }
        };
        instances.push(Instance {
            id: instances.len() as u32 + 1,
            values,
            ground_truth,
            groups: BTreeMap::new(),
        });
    }
    if instances.is_empty() {
        return Err(DatasetError::Empty);
    }
    Dataset::build(schema, instances, mapping)
}

/// The bundled file with the default mapping.
pub fn bundled() -> Dataset {
    load_german_credit(BUNDLED_DATA.as_bytes(), default_mapping()).expect("bundled data is valid")
}

/// Reads a dataset file: either a dataset JSON document or the raw
/// whitespace-separated format, which gets the default mapping.
pub fn load_file(path: &Path) -> Result<Dataset> {
    let text = std::fs::read_to_string(path)?;
    if text.trim_start().starts_with('{') {
        Dataset::from_json(&text)
    } else {
        load_german_credit(text.as_bytes(), default_mapping())
    }
}
