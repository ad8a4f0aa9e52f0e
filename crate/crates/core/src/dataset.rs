//! Tabular dataset model: schema, instances, derived protected-group columns
//! and the filtered/sorted/binned views served to the dashboard.
//!
//! A [`Dataset`] is immutable once built. Protected-group membership is
//! derived from raw attribute values by each [`ProtectedGroupSpec`] and stored
//! next to the raw values, so every consumer sees the same assignment.

use std::cmp::Ordering;
use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum DatasetError {
    #[error("empty input")]
    Empty,
    #[error("line {line}: expected {expected} columns, found {found}")]
    MalformedRow {
        line: usize,
        expected: usize,
        found: usize,
    },
    #[error("line {line}: unknown category code `{code}` for feature `{feature}`")]
    UnknownCategory {
        line: usize,
        feature: String,
        code: String,
    },
    #[error("line {line}: `{raw}` is not a number (feature `{feature}`)")]
    InvalidNumber {
        line: usize,
        feature: String,
        raw: String,
    },
    #[error("line {line}: invalid target `{raw}`")]
    InvalidTarget { line: usize, raw: String },
    #[error("unknown feature `{0}`")]
    UnknownFeature(String),
    #[error("unknown protected group `{0}`")]
    UnknownGroup(String),
    #[error("stratum `{stratum}` is not declared for legitimate feature `{feature}`")]
    UndeclaredStratum { feature: String, stratum: String },
    #[error("invalid bin edges: {0}")]
    InvalidBins(String),
    #[error("invalid filter `{0}`")]
    InvalidFilter(String),
    #[error("inconsistent dataset: {0}")]
    Inconsistent(String),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T, E = DatasetError> = std::result::Result<T, E>;

/// Binary credit label. Serialized as `1` (Good) / `0` (Bad).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(into = "u8", try_from = "u8")]
pub enum Label {
    Bad = 0,
    Good = 1,
}

impl Label {
    pub fn from_bool(good: bool) -> Self {
        if good {
            Label::Good
        } else {
            Label::Bad
        }
    }

    pub fn is_good(self) -> bool {
        self == Label::Good
    }

    pub fn flipped(self) -> Self {
        Label::from_bool(!self.is_good())
    }

    pub fn as_f64(self) -> f64 {
        if self.is_good() {
            1.0
        } else {
            0.0
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Label::Good => "Good",
            Label::Bad => "Bad",
        }
    }
}

impl From<Label> for u8 {
    fn from(label: Label) -> u8 {
        label as u8
    }
}

impl TryFrom<u8> for Label {
    type Error = String;

    fn try_from(v: u8) -> std::result::Result<Self, String> {
        match v {
            0 => Ok(Label::Bad),
            1 => Ok(Label::Good),
            other => Err(format!("label must be 0 or 1, got {other}")),
        }
    }
}

impl fmt::Display for Label {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Which label column of a row is meant: the recorded ground truth or the
/// model's prediction.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Target {
    GroundTruth,
    Prediction,
}

impl FromStr for Target {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "ground_truth" | "rated" => Ok(Target::GroundTruth),
            "prediction" | "predicted" => Ok(Target::Prediction),
            other => Err(format!("unknown label target `{other}`")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FeatureKind {
    Categorical,
    Numeric,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureSpec {
    pub name: String,
    pub kind: FeatureKind,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub categories: Vec<String>,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub display_labels: BTreeMap<String, String>,
}

impl FeatureSpec {
    pub fn numeric(name: &str) -> Self {
        FeatureSpec {
            name: name.to_string(),
            kind: FeatureKind::Numeric,
            categories: Vec::new(),
            display_labels: BTreeMap::new(),
        }
    }

    pub fn categorical(name: &str, codes: &[(&str, &str)]) -> Self {
        FeatureSpec {
            name: name.to_string(),
            kind: FeatureKind::Categorical,
            categories: codes.iter().map(|(c, _)| c.to_string()).collect(),
            display_labels: codes
                .iter()
                .map(|(c, l)| (c.to_string(), l.to_string()))
                .collect(),
        }
    }

    pub fn is_categorical(&self) -> bool {
        self.kind == FeatureKind::Categorical
    }

    pub fn display(&self, code: &str) -> String {
        self.display_labels
            .get(code)
            .cloned()
            .unwrap_or_else(|| code.to_string())
    }
}

/// A raw attribute value: a category code or a number.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Value {
    Number(f64),
    Category(String),
}

impl Value {
    pub fn as_number(&self) -> Option<f64> {
        match self {
            Value::Number(n) => Some(*n),
            Value::Category(_) => None,
        }
    }

    pub fn as_category(&self) -> Option<&str> {
        match self {
            Value::Category(c) => Some(c),
            Value::Number(_) => None,
        }
    }

    fn total_cmp(&self, other: &Value) -> Ordering {
        match (self, other) {
            (Value::Number(a), Value::Number(b)) => a.total_cmp(b),
            (Value::Category(a), Value::Category(b)) => a.cmp(b),
            (Value::Number(_), Value::Category(_)) => Ordering::Less,
            (Value::Category(_), Value::Number(_)) => Ordering::Greater,
        }
    }

    /// Parses a filter literal: numbers become [`Value::Number`], anything
    /// else a category code.
    pub fn parse_literal(s: &str) -> Value {
        s.parse::<f64>()
            .map(Value::Number)
            .unwrap_or_else(|_| Value::Category(s.to_string()))
    }
}

impl fmt::Display for Value {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Value::Number(n) => write!(f, "{n}"),
            Value::Category(c) => f.write_str(c),
        }
    }
}

/// Rule deciding whether a raw value belongs to the protected group.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "rule", rename_all = "snake_case")]
pub enum GroupPredicate {
    /// Numeric value strictly below `value`.
    LessThan { value: f64 },
    /// Category code in `codes`.
    OneOf { codes: Vec<String> },
}

impl GroupPredicate {
    pub fn is_protected(&self, value: &Value) -> Option<bool> {
        match (self, value) {
            (GroupPredicate::LessThan { value: cut }, Value::Number(n)) => Some(n < cut),
            (GroupPredicate::OneOf { codes }, Value::Category(c)) => {
                Some(codes.iter().any(|code| code == c))
            }
            _ => None,
        }
    }
}

/// Binary protected-group column derived from one raw attribute.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProtectedGroupSpec {
    /// Name of the derived column, e.g. `age_group`.
    pub feature: String,
    /// Raw attribute the column is derived from.
    pub source: String,
    pub predicate: GroupPredicate,
    pub protected_label: String,
    pub unprotected_label: String,
}

impl ProtectedGroupSpec {
    pub fn label(&self, protected: bool) -> &str {
        if protected {
            &self.protected_label
        } else {
            &self.unprotected_label
        }
    }
}

/// Conditioning feature `L` of conditional statistical parity.
///
/// Categorical features use their category codes as strata. Numeric features
/// declare `edges`; stratum `i` is `[edges[i], edges[i + 1])`, the last one
/// closed on the right.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LegitimateFeatureSpec {
    pub feature: String,
    pub strata: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub edges: Option<Vec<f64>>,
}

impl LegitimateFeatureSpec {
    pub fn stratum_of(&self, value: &Value) -> Option<String> {
        match (value, &self.edges) {
            (Value::Category(c), None) => self.strata.iter().find(|s| *s == c).cloned(),
            (Value::Number(n), Some(edges)) => bin_index(edges, *n).map(|i| self.strata[i].clone()),
            _ => None,
        }
    }
}

/// Protected and legitimate feature declarations for a raw dataset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetMapping {
    pub protected: Vec<ProtectedGroupSpec>,
    pub legitimate: Vec<LegitimateFeatureSpec>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Instance {
    pub id: u32,
    pub values: BTreeMap<String, Value>,
    pub ground_truth: Label,
    /// Derived protected-group membership, `true` = protected.
    pub groups: BTreeMap<String, bool>,
}

impl Instance {
    pub fn is_protected(&self, group: &str) -> Option<bool> {
        self.groups.get(group).copied()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dataset {
    pub schema: Vec<FeatureSpec>,
    pub instances: Vec<Instance>,
    pub protected_specs: Vec<ProtectedGroupSpec>,
    pub legitimate_specs: Vec<LegitimateFeatureSpec>,
}

/// Column types addressable by views and histograms.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ColumnRef<'a> {
    Id,
    GroundTruth,
    Feature(&'a FeatureSpec),
    Group(&'a ProtectedGroupSpec),
}

impl Dataset {
    /// Builds a dataset from raw instances (groups may be empty) and derives
    /// every protected-group column.
    pub fn build(
        schema: Vec<FeatureSpec>,
        mut instances: Vec<Instance>,
        mapping: DatasetMapping,
    ) -> Result<Self> {
        for inst in &mut instances {
            inst.groups = derive_groups(&mapping.protected, &inst.values)?;
        }
        let ds = Dataset {
            schema,
            instances,
            protected_specs: mapping.protected,
            legitimate_specs: mapping.legitimate,
        };
        ds.validate()?;
        Ok(ds)
    }

    pub fn len(&self) -> usize {
        self.instances.len()
    }

    pub fn is_empty(&self) -> bool {
        self.instances.is_empty()
    }

    pub fn feature(&self, name: &str) -> Option<&FeatureSpec> {
        self.schema.iter().find(|f| f.name == name)
    }

    pub fn protected_spec(&self, name: &str) -> Option<&ProtectedGroupSpec> {
        self.protected_specs.iter().find(|s| s.feature == name)
    }

    /// Looks a protected group up by its derived column or by its raw source
    /// attribute (`age` resolves to `age_group`).
    pub fn resolve_group(&self, name: &str) -> Result<&ProtectedGroupSpec> {
        self.protected_spec(name)
            .or_else(|| self.protected_specs.iter().find(|s| s.source == name))
            .ok_or_else(|| DatasetError::UnknownGroup(name.to_string()))
    }

    pub fn legitimate_spec(&self, name: &str) -> Option<&LegitimateFeatureSpec> {
        self.legitimate_specs.iter().find(|s| s.feature == name)
    }

    /// Instance ids are 1-based file order, so lookup is positional.
    pub fn instance(&self, id: u32) -> Option<&Instance> {
        let idx = (id as usize).checked_sub(1)?;
        self.instances.get(idx).filter(|inst| inst.id == id)
    }

    pub fn column(&self, name: &str) -> Option<ColumnRef<'_>> {
        match name {
            "id" => Some(ColumnRef::Id),
            "ground_truth" => Some(ColumnRef::GroundTruth),
            _ => self
                .protected_spec(name)
                .map(ColumnRef::Group)
                .or_else(|| self.feature(name).map(ColumnRef::Feature)),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let mut names = BTreeSet::new();
        for f in &self.schema {
            if !names.insert(f.name.as_str()) {
                return Err(DatasetError::Inconsistent(format!(
                    "duplicate feature `{}`",
                    f.name
                )));
            }
            if f.is_categorical() && f.categories.len() < 2 {
                return Err(DatasetError::Inconsistent(format!(
                    "categorical feature `{}` needs at least two categories",
                    f.name
                )));
            }
        }
        for spec in &self.protected_specs {
            if self.feature(&spec.source).is_none() {
                return Err(DatasetError::UnknownFeature(spec.source.clone()));
            }
            if names.contains(spec.feature.as_str()) {
                return Err(DatasetError::Inconsistent(format!(
                    "group column `{}` shadows a raw feature",
                    spec.feature
                )));
            }
        }
        for spec in &self.legitimate_specs {
            let feature = self
                .feature(&spec.feature)
                .ok_or_else(|| DatasetError::UnknownFeature(spec.feature.clone()))?;
            let distinct: BTreeSet<_> = spec.strata.iter().collect();
            if distinct.len() != spec.strata.len() || spec.strata.is_empty() {
                return Err(DatasetError::Inconsistent(format!(
                    "strata of `{}` must be non-empty and pairwise distinct",
                    spec.feature
                )));
            }
            match (&feature.kind, &spec.edges) {
                (FeatureKind::Categorical, None) => {
                    if let Some(s) = spec.strata.iter().find(|s| !feature.categories.contains(s)) {
                        return Err(DatasetError::UndeclaredStratum {
                            feature: spec.feature.clone(),
                            stratum: s.clone(),
                        });
                    }
                }
                (FeatureKind::Numeric, Some(edges)) => {
                    check_edges(edges)?;
                    if edges.len() != spec.strata.len() + 1 {
                        return Err(DatasetError::InvalidBins(format!(
                            "`{}` declares {} strata for {} edges",
                            spec.feature,
                            spec.strata.len(),
                            edges.len()
                        )));
                    }
                }
                _ => {
                    return Err(DatasetError::Inconsistent(format!(
                        "legitimate feature `{}`: bin edges are required for numeric features only",
                        spec.feature
                    )))
                }
            }
        }
        for (pos, inst) in self.instances.iter().enumerate() {
            if inst.id as usize != pos + 1 {
                return Err(DatasetError::Inconsistent(format!(
                    "instance ids must be dense and 1-based; found id {} at position {}",
                    inst.id,
                    pos + 1
                )));
            }
            for f in &self.schema {
                let v = inst.values.get(&f.name).ok_or_else(|| {
                    DatasetError::Inconsistent(format!(
                        "instance {} is missing `{}`",
                        inst.id, f.name
                    ))
                })?;
                let ok = match (f.kind, v) {
                    (FeatureKind::Categorical, Value::Category(c)) => f.categories.contains(c),
                    (FeatureKind::Numeric, Value::Number(n)) => n.is_finite(),
                    _ => false,
                };
                if !ok {
                    return Err(DatasetError::Inconsistent(format!(
                        "instance {}: invalid value `{v}` for `{}`",
                        inst.id, f.name
                    )));
                }
            }
            if inst.values.len() != self.schema.len() {
                return Err(DatasetError::Inconsistent(format!(
                    "instance {} carries values outside the schema",
                    inst.id
                )));
            }
            let expected = derive_groups(&self.protected_specs, &inst.values)?;
            if expected != inst.groups {
                return Err(DatasetError::Inconsistent(format!(
                    "instance {}: derived group columns disagree with their specs",
                    inst.id
                )));
            }
        }
        Ok(())
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("dataset serializes")
    }

    /// Reads a canonical JSON dump and re-validates every derived column.
    pub fn from_json(text: &str) -> Result<Self> {
        let ds: Dataset = serde_json::from_str(text)?;
        ds.validate()?;
        Ok(ds)
    }

    /// SHA-256 of the canonical JSON dump. Models record it so a model is
    /// never served against a different dataset.
    pub fn fingerprint(&self) -> String {
        let compact = serde_json::to_vec(self).expect("dataset serializes");
        hex::encode(Sha256::digest(&compact))
    }
}

fn derive_groups(
    specs: &[ProtectedGroupSpec],
    values: &BTreeMap<String, Value>,
) -> Result<BTreeMap<String, bool>> {
    specs
        .iter()
        .map(|spec| {
            let raw = values
                .get(&spec.source)
                .ok_or_else(|| DatasetError::UnknownFeature(spec.source.clone()))?;
            let protected = spec.predicate.is_protected(raw).ok_or_else(|| {
                DatasetError::Inconsistent(format!(
                    "group rule for `{}` cannot evaluate value `{raw}`",
                    spec.feature
                ))
            })?;
            Ok((spec.feature.clone(), protected))
        })
        .collect()
}

/// The two id sets induced by a protected-group column.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct GroupPartition {
    pub protected: BTreeSet<u32>,
    pub unprotected: BTreeSet<u32>,
}

/// Splits the dataset by a protected group, optionally restricted to the
/// instances whose legitimate feature falls in `stratum`.
pub fn partition(
    dataset: &Dataset,
    group: &str,
    stratum: Option<(&str, &str)>,
) -> Result<GroupPartition> {
    let spec = dataset
        .protected_spec(group)
        .ok_or_else(|| DatasetError::UnknownGroup(group.to_string()))?;
    let stratum = match stratum {
        Some((feature, l)) => {
            let legit = dataset
                .legitimate_spec(feature)
                .ok_or_else(|| DatasetError::UnknownFeature(feature.to_string()))?;
            if !legit.strata.iter().any(|s| s == l) {
                return Err(DatasetError::UndeclaredStratum {
                    feature: feature.to_string(),
                    stratum: l.to_string(),
                });
            }
            Some((legit, l))
        }
        None => None,
    };
    let mut out = GroupPartition::default();
    for inst in &dataset.instances {
        if let Some((legit, l)) = stratum {
            let value = &inst.values[&legit.feature];
            if legit.stratum_of(value).as_deref() != Some(l) {
                continue;
            }
        }
        if inst.groups[&spec.feature] {
            out.protected.insert(inst.id);
        } else {
            out.unprotected.insert(inst.id);
        }
    }
    Ok(out)
}

/// Anything that can be shown as a row of the instance table.
pub trait Row {
    fn id(&self) -> u32;
    /// Value of a named column. Group columns yield the literal
    /// `protected` / `unprotected`, label columns `Good` / `Bad`.
    fn field(&self, dataset: &Dataset, name: &str) -> Option<Value>;
    fn label(&self, target: Target) -> Option<Label>;
    /// Columns this row type adds on top of the dataset's own.
    fn extra_columns() -> &'static [&'static str] {
        &[]
    }
}

fn group_literal(protected: bool) -> Value {
    Value::Category(if protected { "protected" } else { "unprotected" }.to_string())
}

impl Row for Instance {
    fn id(&self) -> u32 {
        self.id
    }

    fn field(&self, _dataset: &Dataset, name: &str) -> Option<Value> {
        match name {
            "id" => Some(Value::Number(self.id as f64)),
            "ground_truth" => Some(Value::Category(self.ground_truth.name().to_string())),
            _ => self
                .groups
                .get(name)
                .map(|p| group_literal(*p))
                .or_else(|| self.values.get(name).cloned()),
        }
    }

    fn label(&self, target: Target) -> Option<Label> {
        match target {
            Target::GroundTruth => Some(self.ground_truth),
            Target::Prediction => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FilterOp {
    Eq,
    Ne,
    Lt,
    Le,
    Gt,
    Ge,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Filter {
    pub feature: String,
    pub op: FilterOp,
    pub value: Value,
}

impl Filter {
    pub fn eq(feature: &str, value: Value) -> Self {
        Filter {
            feature: feature.to_string(),
            op: FilterOp::Eq,
            value,
        }
    }

    fn matches(&self, value: &Value) -> bool {
        let ord = value.total_cmp(&self.value);
        let same_kind = matches!(
            (value, &self.value),
            (Value::Number(_), Value::Number(_)) | (Value::Category(_), Value::Category(_))
        );
        match self.op {
            FilterOp::Eq => same_kind && ord == Ordering::Equal,
            FilterOp::Ne => !(same_kind && ord == Ordering::Equal),
            FilterOp::Lt => same_kind && ord == Ordering::Less,
            FilterOp::Le => same_kind && ord != Ordering::Greater,
            FilterOp::Gt => same_kind && ord == Ordering::Greater,
            FilterOp::Ge => same_kind && ord != Ordering::Less,
        }
    }
}

impl FromStr for Filter {
    type Err = DatasetError;

    /// Parses `feature<op>value` with op one of `!=`, `<=`, `>=`, `=`, `<`, `>`.
    fn from_str(s: &str) -> Result<Self> {
        const OPS: [(&str, FilterOp); 6] = [
            ("!=", FilterOp::Ne),
            ("<=", FilterOp::Le),
            (">=", FilterOp::Ge),
            ("=", FilterOp::Eq),
            ("<", FilterOp::Lt),
            (">", FilterOp::Gt),
        ];
        let (pos, token, op) = OPS
            .iter()
            .filter_map(|(tok, op)| s.find(tok).map(|p| (p, *tok, *op)))
            .min_by_key(|(p, tok, _)| (*p, std::cmp::Reverse(tok.len())))
            .ok_or_else(|| DatasetError::InvalidFilter(s.to_string()))?;
        let feature = s[..pos].trim();
        let value = s[pos + token.len()..].trim();
        if feature.is_empty() || value.is_empty() {
            return Err(DatasetError::InvalidFilter(s.to_string()));
        }
        Ok(Filter {
            feature: feature.to_string(),
            op,
            value: Value::parse_literal(value),
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SortDirection {
    Asc,
    Desc,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SortKey {
    pub feature: String,
    pub direction: SortDirection,
}

impl SortKey {
    pub fn asc(feature: &str) -> Self {
        SortKey {
            feature: feature.to_string(),
            direction: SortDirection::Asc,
        }
    }

    pub fn desc(feature: &str) -> Self {
        SortKey {
            feature: feature.to_string(),
            direction: SortDirection::Desc,
        }
    }
}

impl FromStr for SortKey {
    type Err = DatasetError;

    /// `feature`, `feature:asc` or `feature:desc`.
    fn from_str(s: &str) -> Result<Self> {
        let (feature, dir) = s.split_once(':').unwrap_or((s, "asc"));
        let direction = match dir {
            "asc" => SortDirection::Asc,
            "desc" => SortDirection::Desc,
            _ => return Err(DatasetError::InvalidFilter(s.to_string())),
        };
        Ok(SortKey {
            feature: feature.to_string(),
            direction,
        })
    }
}

fn check_column<R: Row>(dataset: &Dataset, name: &str) -> Result<()> {
    if dataset.column(name).is_some() || R::extra_columns().contains(&name) {
        Ok(())
    } else {
        Err(DatasetError::UnknownFeature(name.to_string()))
    }
}

/// Conjunctive filtering followed by a stable sort.
pub fn query_view<'r, R: Row>(
    dataset: &Dataset,
    rows: &'r [R],
    filters: &[Filter],
    sort: Option<&SortKey>,
) -> Result<Vec<&'r R>> {
    for f in filters {
        check_column::<R>(dataset, &f.feature)?;
    }
    if let Some(key) = sort {
        check_column::<R>(dataset, &key.feature)?;
    }
    let mut out: Vec<&R> = rows
        .iter()
        .filter(|row| {
            filters.iter().all(|f| {
                row.field(dataset, &f.feature)
                    .is_some_and(|v| f.matches(&v))
            })
        })
        .collect();
    if let Some(key) = sort {
        out.sort_by(|a, b| {
            let va = a.field(dataset, &key.feature);
            let vb = b.field(dataset, &key.feature);
            let ord = match (va, vb) {
                (Some(x), Some(y)) => x.total_cmp(&y),
                (a, b) => a.is_some().cmp(&b.is_some()),
            };
            match key.direction {
                SortDirection::Asc => ord,
                SortDirection::Desc => ord.reverse(),
            }
        });
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HistogramBucket {
    pub label: String,
    pub positive: usize,
    pub negative: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Histogram {
    pub feature: String,
    pub target: Target,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub edges: Option<Vec<f64>>,
    pub buckets: Vec<HistogramBucket>,
}

impl Histogram {
    pub fn total(&self) -> usize {
        self.buckets.iter().map(|b| b.positive + b.negative).sum()
    }
}

/// Number of equal-width bins used when a numeric histogram has no edges.
pub const DEFAULT_BINS: usize = 5;

fn check_edges(edges: &[f64]) -> Result<()> {
    if edges.len() < 2 {
        return Err(DatasetError::InvalidBins("need at least two edges".into()));
    }
    if edges.iter().any(|e| !e.is_finite()) || edges.windows(2).any(|w| w[0] >= w[1]) {
        return Err(DatasetError::InvalidBins(
            "edges must be finite and strictly increasing".into(),
        ));
    }
    Ok(())
}

/// Index of the bin holding `x`; bins are half-open except the last.
fn bin_index(edges: &[f64], x: f64) -> Option<usize> {
    let last = edges.len() - 1;
    if x < edges[0] || x > edges[last] {
        return None;
    }
    if x == edges[last] {
        return Some(last - 1);
    }
    Some(edges.partition_point(|e| *e <= x) - 1)
}

fn equal_width_edges(values: &[f64], bins: usize) -> Vec<f64> {
    let lo = values.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !lo.is_finite() {
        return vec![0.0, 1.0];
    }
    if lo == hi {
        return vec![lo, lo + 1.0];
    }
    let width = (hi - lo) / bins as f64;
    let mut edges: Vec<f64> = (0..bins).map(|i| lo + width * i as f64).collect();
    edges.push(hi);
    edges
}

/// Positive/negative label counts per category (or per bin for numerics).
pub fn histogram<R: Row>(
    dataset: &Dataset,
    rows: &[R],
    feature: &str,
    target: Target,
    bins: Option<&[f64]>,
) -> Result<Histogram> {
    let column = dataset
        .column(feature)
        .ok_or_else(|| DatasetError::UnknownFeature(feature.to_string()))?;
    let label_of = |row: &R| {
        row.label(target).ok_or_else(|| {
            DatasetError::Inconsistent(format!("rows carry no {target:?} labels"))
        })
    };
    let tally = |buckets: &mut Vec<HistogramBucket>, idx: usize, label: Label| {
        if label.is_good() {
            buckets[idx].positive += 1;
        } else {
            buckets[idx].negative += 1;
        }
    };
    let empty = |label: String| HistogramBucket {
        label,
        positive: 0,
        negative: 0,
    };

    let categorical: Option<Vec<String>> = match column {
        ColumnRef::Feature(f) if f.is_categorical() => Some(f.categories.clone()),
        ColumnRef::Group(_) => Some(vec!["protected".into(), "unprotected".into()]),
        ColumnRef::GroundTruth => Some(vec!["Good".into(), "Bad".into()]),
        _ => None,
    };

    if let Some(categories) = categorical {
        let mut buckets: Vec<_> = categories.iter().cloned().map(empty).collect();
        for row in rows {
            let label = label_of(row)?;
            let v = row
                .field(dataset, feature)
                .ok_or_else(|| DatasetError::UnknownFeature(feature.to_string()))?;
            let idx = categories
                .iter()
                .position(|c| Some(c.as_str()) == v.as_category())
                .ok_or_else(|| {
                    DatasetError::Inconsistent(format!("value `{v}` outside `{feature}` categories"))
                })?;
            tally(&mut buckets, idx, label);
        }
        return Ok(Histogram {
            feature: feature.to_string(),
            target,
            edges: None,
            buckets,
        });
    }

    let mut points = Vec::with_capacity(rows.len());
    for row in rows {
        let v = row
            .field(dataset, feature)
            .and_then(|v| v.as_number())
            .ok_or_else(|| DatasetError::Inconsistent(format!("`{feature}` is not numeric")))?;
        points.push((v, label_of(row)?));
    }
    let edges = match bins {
        Some(edges) => {
            check_edges(edges)?;
            edges.to_vec()
        }
        None => equal_width_edges(
            &points.iter().map(|(v, _)| *v).collect::<Vec<_>>(),
            DEFAULT_BINS,
        ),
    };
    let mut buckets: Vec<_> = edges
        .windows(2)
        .enumerate()
        .map(|(i, w)| {
            let close = if i + 2 == edges.len() { ']' } else { ')' };
            empty(format!("[{}, {}{close}", w[0], w[1]))
        })
        .collect();
    for (v, label) in points {
        let idx = bin_index(&edges, v).ok_or_else(|| {
            DatasetError::InvalidBins(format!("value {v} lies outside the bin edges"))
        })?;
        tally(&mut buckets, idx, label);
    }
    Ok(Histogram {
        feature: feature.to_string(),
        target,
        edges: Some(edges),
        buckets,
    })
}
