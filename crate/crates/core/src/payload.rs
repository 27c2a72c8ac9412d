//! Payloads that travel along pipeline edges.
//!
//! There are exactly three payload kinds: a [`FeatureVector`] entering the
//! pipeline, the [`ClassScores`] a model produces and the final [`Decision`].

use std::collections::HashSet;
use std::fmt;
use std::sync::Arc;

use serde::de::Error as _;
use serde::{Deserialize, Deserializer, Serialize, Serializer};
use thiserror::Error;

use crate::graph::BlockId;

/// Tolerance for "probabilities sum to one".
pub const PROBABILITY_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PayloadError {
    #[error("duplicate feature name `{0}`")]
    DuplicateFeature(String),
    #[error("feature `{name}` has non-finite value {value}")]
    NonFinite { name: String, value: f64 },
    #[error("expected {expected} values for schema `{schema}`, got {got}")]
    Arity {
        schema: String,
        expected: usize,
        got: usize,
    },
    #[error("schema mismatch: expected `{expected}`, got `{got}`")]
    SchemaMismatch { expected: String, got: String },
    #[error("unknown feature `{0}`")]
    UnknownFeature(String),
    #[error("missing feature `{0}`")]
    MissingFeature(String),
    #[error("class scores need at least two classes")]
    TooFewClasses,
    #[error("duplicate class label `{0}`")]
    DuplicateLabel(String),
    #[error("probability {0} outside [0, 1]")]
    ProbabilityRange(f64),
    #[error("probabilities sum to {0}, not 1")]
    NotNormalized(f64),
    #[error("unknown class label `{0}`")]
    UnknownLabel(String),
}

/// The closed set of payload tags an edge can carry.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum PayloadKind {
    FeatureVector,
    ClassScores,
    Decision,
}

impl fmt::Display for PayloadKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            PayloadKind::FeatureVector => "FeatureVector",
            PayloadKind::ClassScores => "ClassScores",
            PayloadKind::Decision => "Decision",
        };
        f.write_str(s)
    }
}

/// Ordered, named feature layout shared by every vector of one schema.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FeatureSchema {
    pub id: String,
    pub names: Vec<String>,
}

impl FeatureSchema {
    pub fn new(id: impl Into<String>, names: Vec<String>) -> Result<Arc<Self>, PayloadError> {
        let mut seen = HashSet::new();
        for name in &names {
            if !seen.insert(name.as_str()) {
                return Err(PayloadError::DuplicateFeature(name.clone()));
            }
        }
        Ok(Arc::new(FeatureSchema {
            id: id.into(),
            names,
        }))
    }

    pub fn len(&self) -> usize {
        self.names.len()
    }

    pub fn is_empty(&self) -> bool {
        self.names.is_empty()
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.names.iter().position(|n| n == name)
    }

    /// Identifier used for the projection of `parent` onto `names`.
    pub fn projection_id(parent: &str, names: &[String]) -> String {
        format!("{parent}[{}]", names.join(","))
    }

    /// Schema of a column projection. Fails on names the schema lacks.
    pub fn project(&self, names: &[String]) -> Result<Arc<FeatureSchema>, PayloadError> {
        for name in names {
            if self.index_of(name).is_none() {
                return Err(PayloadError::MissingFeature(name.clone()));
            }
        }
        FeatureSchema::new(Self::projection_id(&self.id, names), names.to_vec())
    }

    pub fn same_layout(&self, other: &FeatureSchema) -> bool {
        self.id == other.id && self.names == other.names
    }
}

/// One instance: finite values laid out per a [`FeatureSchema`].
#[derive(Clone, PartialEq)]
pub struct FeatureVector {
    schema: Arc<FeatureSchema>,
    values: Vec<f64>,
}

impl FeatureVector {
    pub fn new(schema: Arc<FeatureSchema>, values: Vec<f64>) -> Result<Self, PayloadError> {
        if values.len() != schema.len() {
            return Err(PayloadError::Arity {
                schema: schema.id.clone(),
                expected: schema.len(),
                got: values.len(),
            });
        }
        if let Some((i, v)) = values.iter().enumerate().find(|(_, v)| !v.is_finite()) {
            return Err(PayloadError::NonFinite {
                name: schema.names[i].clone(),
                value: *v,
            });
        }
        Ok(FeatureVector { schema, values })
    }

    /// Builds a vector from `(name, value)` pairs under a fresh schema.
    pub fn from_pairs(
        schema_id: impl Into<String>,
        pairs: impl IntoIterator<Item = (String, f64)>,
    ) -> Result<Self, PayloadError> {
        let (names, values): (Vec<_>, Vec<_>) = pairs.into_iter().unzip();
        FeatureVector::new(FeatureSchema::new(schema_id, names)?, values)
    }

    /// Reorders a name→value lookup into `schema` order. Every schema feature
    /// must be present and no foreign names are accepted.
    pub fn conform<'a>(
        schema: &Arc<FeatureSchema>,
        pairs: impl IntoIterator<Item = (&'a str, f64)>,
    ) -> Result<Self, PayloadError> {
        let mut values: Vec<Option<f64>> = vec![None; schema.len()];
        for (name, value) in pairs {
            let i = schema
                .index_of(name)
                .ok_or_else(|| PayloadError::UnknownFeature(name.to_string()))?;
            values[i] = Some(value);
        }
        let values = values
            .into_iter()
            .enumerate()
            .map(|(i, v)| v.ok_or_else(|| PayloadError::MissingFeature(schema.names[i].clone())))
            .collect::<Result<Vec<_>, _>>()?;
        FeatureVector::new(schema.clone(), values)
    }

    pub fn schema(&self) -> &Arc<FeatureSchema> {
        &self.schema
    }

    pub fn schema_id(&self) -> &str {
        &self.schema.id
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn names(&self) -> &[String] {
        &self.schema.names
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn get(&self, name: &str) -> Option<f64> {
        self.schema.index_of(name).map(|i| self.values[i])
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, f64)> {
        self.schema
            .names
            .iter()
            .map(String::as_str)
            .zip(self.values.iter().copied())
    }

    /// Checks that this vector is laid out per `schema`.
    pub fn check_schema(&self, schema: &FeatureSchema) -> Result<(), PayloadError> {
        if std::ptr::eq(self.schema.as_ref(), schema) || self.schema.same_layout(schema) {
            Ok(())
        } else {
            Err(PayloadError::SchemaMismatch {
                expected: schema.id.clone(),
                got: self.schema.id.clone(),
            })
        }
    }

    /// Returns a copy with some values replaced.
    pub fn with_overrides<'a>(
        &self,
        overrides: impl IntoIterator<Item = (&'a str, f64)>,
    ) -> Result<Self, PayloadError> {
        let mut values = self.values.clone();
        for (name, value) in overrides {
            let i = self
                .schema
                .index_of(name)
                .ok_or_else(|| PayloadError::UnknownFeature(name.to_string()))?;
            values[i] = value;
        }
        FeatureVector::new(self.schema.clone(), values)
    }

    pub fn project(&self, target: &Arc<FeatureSchema>) -> Result<Self, PayloadError> {
        let values = target
            .names
            .iter()
            .map(|n| self.get(n).ok_or_else(|| PayloadError::MissingFeature(n.clone())))
            .collect::<Result<Vec<_>, _>>()?;
        FeatureVector::new(target.clone(), values)
    }
}

impl fmt::Debug for FeatureVector {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("FeatureVector")
            .field("schema_id", &self.schema.id)
            .field("values", &self.iter().collect::<Vec<_>>())
            .finish()
    }
}

#[derive(Serialize, Deserialize)]
struct FeatureVectorDoc {
    schema_id: String,
    values: Vec<(String, f64)>,
}

impl Serialize for FeatureVector {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        FeatureVectorDoc {
            schema_id: self.schema.id.clone(),
            values: self.iter().map(|(n, v)| (n.to_string(), v)).collect(),
        }
        .serialize(serializer)
    }
}

impl<'de> Deserialize<'de> for FeatureVector {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let doc = FeatureVectorDoc::deserialize(deserializer)?;
        FeatureVector::from_pairs(doc.schema_id, doc.values).map_err(D::Error::custom)
    }
}

/// Ordered, unique class labels.
pub type Labels = Arc<[String]>;

pub fn labels<S: AsRef<str>>(names: &[S]) -> Labels {
    names.iter().map(|s| s.as_ref().to_string()).collect()
}

/// A probability distribution over class labels.
#[derive(Clone, PartialEq)]
pub struct ClassScores {
    labels: Labels,
    probs: Vec<f64>,
}

impl ClassScores {
    pub fn new(labels: Labels, probs: Vec<f64>) -> Result<Self, PayloadError> {
        if labels.len() < 2 {
            return Err(PayloadError::TooFewClasses);
        }
        if labels.len() != probs.len() {
            return Err(PayloadError::Arity {
                schema: "class scores".into(),
                expected: labels.len(),
                got: probs.len(),
            });
        }
        let mut seen = HashSet::new();
        for l in labels.iter() {
            if !seen.insert(l.as_str()) {
                return Err(PayloadError::DuplicateLabel(l.clone()));
            }
        }
        for &p in &probs {
            if !p.is_finite() || !(0.0..=1.0).contains(&p) {
                return Err(PayloadError::ProbabilityRange(p));
            }
        }
        let total: f64 = probs.iter().sum();
        if (total - 1.0).abs() > PROBABILITY_TOLERANCE {
            return Err(PayloadError::NotNormalized(total));
        }
        Ok(ClassScores { labels, probs })
    }

    /// Normalizes nonnegative weights into a distribution.
    pub fn from_weights(labels: Labels, weights: &[f64]) -> Result<Self, PayloadError> {
        let total: f64 = weights.iter().sum();
        if !(total > 0.0) || !total.is_finite() {
            return Err(PayloadError::NotNormalized(total));
        }
        ClassScores::new(labels, weights.iter().map(|w| w / total).collect())
    }

    pub fn uniform(labels: Labels) -> Result<Self, PayloadError> {
        let n = labels.len().max(1);
        ClassScores::new(labels, vec![1.0 / n as f64; n])
    }

    pub fn labels(&self) -> &Labels {
        &self.labels
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    pub fn len(&self) -> usize {
        self.probs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.probs.is_empty()
    }

    pub fn index_of(&self, label: &str) -> Option<usize> {
        self.labels.iter().position(|l| l == label)
    }

    pub fn get(&self, label: &str) -> Option<f64> {
        self.index_of(label).map(|i| self.probs[i])
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, f64)> {
        self.labels
            .iter()
            .map(String::as_str)
            .zip(self.probs.iter().copied())
    }

    /// Index of the highest probability; ties go to the earliest label.
    pub fn argmax(&self) -> usize {
        let mut best = 0;
        for (i, &p) in self.probs.iter().enumerate().skip(1) {
            if p > self.probs[best] {
                best = i;
            }
        }
        best
    }

    pub fn top_label(&self) -> &str {
        &self.labels[self.argmax()]
    }

    pub fn same_classes(&self, other: &ClassScores) -> bool {
        self.labels == other.labels
    }

    /// Decision for the argmax class.
    pub fn decide(&self, source_block: impl Into<BlockId>) -> Decision {
        let i = self.argmax();
        Decision {
            label: self.labels[i].clone(),
            score: self.probs[i],
            source_block: source_block.into(),
        }
    }
}

impl fmt::Debug for ClassScores {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_list().entries(self.iter()).finish()
    }
}

impl Serialize for ClassScores {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        #[derive(Serialize)]
        struct Doc<'a> {
            scores: Vec<(&'a str, f64)>,
        }
        Doc {
            scores: self.iter().collect(),
        }
        .serialize(serializer)
    }
}

impl<'de> Deserialize<'de> for ClassScores {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        #[derive(Deserialize)]
        struct Doc {
            scores: Vec<(String, f64)>,
        }
        let doc = Doc::deserialize(deserializer)?;
        let (labels, probs): (Vec<_>, Vec<_>) = doc.scores.into_iter().unzip();
        ClassScores::new(labels.into(), probs).map_err(D::Error::custom)
    }
}

/// The released outcome of a pipeline.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Decision {
    pub label: String,
    pub score: f64,
    pub source_block: BlockId,
}

impl Decision {
    /// Spreads a decision back into a distribution: the decided label keeps
    /// its score and the remainder is shared evenly by the other labels.
    pub fn as_scores(&self, labels: &Labels) -> Result<ClassScores, PayloadError> {
        let idx = labels
            .iter()
            .position(|l| *l == self.label)
            .ok_or_else(|| PayloadError::UnknownLabel(self.label.clone()))?;
        let rest = (1.0 - self.score) / (labels.len() - 1) as f64;
        let probs = (0..labels.len())
            .map(|i| if i == idx { self.score } else { rest })
            .collect();
        ClassScores::new(labels.clone(), probs)
    }
}

/// A value on an edge.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "value")]
pub enum Payload {
    FeatureVector(FeatureVector),
    ClassScores(ClassScores),
    Decision(Decision),
}

impl Payload {
    pub fn kind(&self) -> PayloadKind {
        match self {
            Payload::FeatureVector(_) => PayloadKind::FeatureVector,
            Payload::ClassScores(_) => PayloadKind::ClassScores,
            Payload::Decision(_) => PayloadKind::Decision,
        }
    }
}
