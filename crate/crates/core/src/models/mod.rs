//! Native learners, datasets and the relabel-and-retrain loop.

pub mod csv_io;
pub mod dataset;
pub mod logreg;
pub mod synthetic;
pub mod tree;

use std::sync::Arc;

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use csv_io::{load_csv, load_instances, write_csv, CsvOptions};
pub use dataset::{Dataset, DatasetSchema};
pub use logreg::{fit_logreg, fit_logreg_with_history, LogRegModel, LogRegParams};
pub use synthetic::{gen_synthetic, heart_schema};
pub use tree::{fit_tree, TreeModel, TreeNode, TreeParams};

use crate::payload::{ClassScores, FeatureSchema, FeatureVector, Labels, PayloadError};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ModelError {
    #[error("parse error at line {line}, column {column}: {message}")]
    Parse {
        line: usize,
        column: usize,
        message: String,
    },
    #[error("schema mismatch: {0}")]
    SchemaMismatch(String),
    #[error("dataset is empty")]
    EmptyDataset,
    #[error("logistic regression needs exactly 2 classes, found {0}")]
    NotBinary(usize),
    #[error("row index {index} out of range for {len} rows")]
    IndexOutOfRange { index: usize, len: usize },
    #[error("unknown label `{0}`")]
    UnknownLabel(String),
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("model cannot be retrained: {0}")]
    NotRetrainable(String),
    #[error("i/o error: {0}")]
    Io(String),
    #[error(transparent)]
    Payload(#[from] PayloadError),
}

/// Anything that maps a feature vector to class probabilities.
pub trait Predictor: Send + Sync {
    fn feature_schema(&self) -> &Arc<FeatureSchema>;
    fn classes(&self) -> &Labels;
    fn predict_proba(&self, x: &FeatureVector) -> Result<ClassScores, ModelError>;
}

/// A fitted native model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "learner", rename_all = "snake_case")]
pub enum Model {
    Cart(TreeModel),
    Logreg(LogRegModel),
}

impl Model {
    /// Refits with the same hyperparameters and seed.
    pub fn refit(&self, data: &Dataset) -> Result<Model, ModelError> {
        match self {
            Model::Cart(t) => fit_tree(data, &t.params).map(Model::Cart),
            Model::Logreg(m) => fit_logreg(data, &m.params).map(Model::Logreg),
        }
    }

    pub fn learner_name(&self) -> &'static str {
        match self {
            Model::Cart(_) => "cart",
            Model::Logreg(_) => "logreg",
        }
    }
}

impl Predictor for Model {
    fn feature_schema(&self) -> &Arc<FeatureSchema> {
        match self {
            Model::Cart(t) => &t.schema,
            Model::Logreg(m) => &m.schema,
        }
    }

    fn classes(&self) -> &Labels {
        match self {
            Model::Cart(t) => &t.classes,
            Model::Logreg(m) => &m.classes,
        }
    }

    fn predict_proba(&self, x: &FeatureVector) -> Result<ClassScores, ModelError> {
        match self {
            Model::Cart(t) => t.predict_proba(x),
            Model::Logreg(m) => m.predict_proba(x),
        }
    }
}

/// Share of rows whose argmax prediction equals the label.
pub fn accuracy(model: &dyn Predictor, data: &Dataset) -> Result<f64, ModelError> {
    if data.is_empty() {
        return Err(ModelError::EmptyDataset);
    }
    let mut correct = 0usize;
    for (i, row) in data.rows().iter().enumerate() {
        if model.predict_proba(row)?.top_label() == data.label(i) {
            correct += 1;
        }
    }
    Ok(correct as f64 / data.len() as f64)
}

/// An operator's request to change one training label.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Relabel {
    pub row_index: usize,
    pub new_label: String,
    #[serde(default = "default_author")]
    pub author: String,
}

fn default_author() -> String {
    "operator".into()
}

/// Audit record of an applied relabel.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RelabelRecord {
    pub row_index: usize,
    pub old_label: String,
    pub new_label: String,
    pub author: String,
    pub timestamp: DateTime<Utc>,
}

#[derive(Debug, Clone)]
pub struct RetrainResult {
    pub model: Model,
    pub data: Dataset,
    pub records: Vec<RelabelRecord>,
}

/// Applies relabels to a copy of `data` and refits `model`'s learner on it.
/// All relabels are validated before any is applied.
pub fn retrain_with_relabels(
    model: &Model,
    data: &Dataset,
    relabels: &[Relabel],
) -> Result<RetrainResult, ModelError> {
    let mut resolved = Vec::with_capacity(relabels.len());
    for r in relabels {
        if r.row_index >= data.len() {
            return Err(ModelError::IndexOutOfRange {
                index: r.row_index,
                len: data.len(),
            });
        }
        let idx = data
            .schema()
            .class_index(&r.new_label)
            .ok_or_else(|| ModelError::UnknownLabel(r.new_label.clone()))?;
        resolved.push((r, idx));
    }
    let now = Utc::now();
    let mut updated = data.clone();
    let mut records = Vec::with_capacity(resolved.len());
    for (r, idx) in resolved {
        records.push(RelabelRecord {
            row_index: r.row_index,
            old_label: updated.label(r.row_index).to_string(),
            new_label: r.new_label.clone(),
            author: r.author.clone(),
            timestamp: now,
        });
        updated.set_label_index(r.row_index, idx);
    }
    let model = model.refit(&updated)?;
    Ok(RetrainResult {
        model,
        data: updated,
        records,
    })
}
