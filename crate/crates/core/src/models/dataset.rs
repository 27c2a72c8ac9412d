use std::collections::HashSet;
use std::sync::Arc;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::ModelError;
use crate::payload::{FeatureSchema, FeatureVector, Labels};

/// Feature layout plus the ordered class set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetSchema {
    pub features: Arc<FeatureSchema>,
    pub classes: Labels,
}

impl DatasetSchema {
    pub fn new(features: Arc<FeatureSchema>, classes: Labels) -> Result<Self, ModelError> {
        let mut seen = HashSet::new();
        for c in classes.iter() {
            if !seen.insert(c.as_str()) {
                return Err(ModelError::SchemaMismatch(format!("duplicate class `{c}`")));
            }
        }
        Ok(DatasetSchema { features, classes })
    }

    pub fn class_index(&self, label: &str) -> Option<usize> {
        self.classes.iter().position(|c| c == label)
    }
}

/// Labeled rows sharing one schema.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    schema: DatasetSchema,
    rows: Vec<FeatureVector>,
    labels: Vec<usize>,
    provenance: String,
}

impl Dataset {
    pub fn new(
        schema: DatasetSchema,
        rows: Vec<FeatureVector>,
        labels: Vec<String>,
        provenance: impl Into<String>,
    ) -> Result<Self, ModelError> {
        let labels = labels
            .iter()
            .map(|l| {
                schema
                    .class_index(l)
                    .ok_or_else(|| ModelError::UnknownLabel(l.clone()))
            })
            .collect::<Result<Vec<_>, _>>()?;
        Self::from_indices(schema, rows, labels, provenance)
    }

    pub fn from_indices(
        schema: DatasetSchema,
        rows: Vec<FeatureVector>,
        labels: Vec<usize>,
        provenance: impl Into<String>,
    ) -> Result<Self, ModelError> {
        if rows.len() != labels.len() {
            return Err(ModelError::SchemaMismatch(format!(
                "{} rows but {} labels",
                rows.len(),
                labels.len()
            )));
        }
        for row in &rows {
            row.check_schema(&schema.features)?;
        }
        if let Some(&bad) = labels.iter().find(|&&l| l >= schema.classes.len()) {
            return Err(ModelError::UnknownLabel(format!("class index {bad}")));
        }
        Ok(Dataset {
            schema,
            rows,
            labels,
            provenance: provenance.into(),
        })
    }

    pub fn schema(&self) -> &DatasetSchema {
        &self.schema
    }

    pub fn features(&self) -> &Arc<FeatureSchema> {
        &self.schema.features
    }

    pub fn classes(&self) -> &Labels {
        &self.schema.classes
    }

    pub fn rows(&self) -> &[FeatureVector] {
        &self.rows
    }

    pub fn label_indices(&self) -> &[usize] {
        &self.labels
    }

    pub fn label(&self, row: usize) -> &str {
        &self.schema.classes[self.labels[row]]
    }

    pub fn labels(&self) -> impl Iterator<Item = &str> {
        self.labels
            .iter()
            .map(|&l| self.schema.classes[l].as_str())
    }

    pub fn provenance(&self) -> &str {
        &self.provenance
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn n_features(&self) -> usize {
        self.schema.features.len()
    }

    /// Number of distinct classes that actually occur.
    pub fn classes_present(&self) -> usize {
        let mut seen = vec![false; self.schema.classes.len()];
        for &l in &self.labels {
            seen[l] = true;
        }
        seen.into_iter().filter(|&s| s).count()
    }

    pub fn column(&self, feature: usize) -> impl Iterator<Item = f64> + '_ {
        self.rows.iter().map(move |r| r.values()[feature])
    }

    pub fn feature_means(&self) -> Vec<f64> {
        let n = self.len().max(1) as f64;
        (0..self.n_features())
            .map(|j| self.column(j).sum::<f64>() / n)
            .collect()
    }

    /// Population standard deviation per feature.
    pub fn feature_stds(&self) -> Vec<f64> {
        let means = self.feature_means();
        let n = self.len().max(1) as f64;
        (0..self.n_features())
            .map(|j| {
                (self.column(j).map(|v| (v - means[j]).powi(2)).sum::<f64>() / n).sqrt()
            })
            .collect()
    }

    pub fn subset(&self, indices: &[usize]) -> Dataset {
        Dataset {
            schema: self.schema.clone(),
            rows: indices.iter().map(|&i| self.rows[i].clone()).collect(),
            labels: indices.iter().map(|&i| self.labels[i]).collect(),
            provenance: self.provenance.clone(),
        }
    }

    /// Seeded shuffle split; the first part gets `round(train_fraction * n)` rows.
    pub fn split(&self, train_fraction: f64, seed: u64) -> (Dataset, Dataset) {
        let mut idx: Vec<usize> = (0..self.len()).collect();
        idx.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
        let cut = ((self.len() as f64) * train_fraction.clamp(0.0, 1.0)).round() as usize;
        (self.subset(&idx[..cut]), self.subset(&idx[cut..]))
    }

    /// Up to `n` distinct rows chosen with a seeded shuffle.
    pub fn sample_rows(&self, n: usize, seed: u64) -> Vec<FeatureVector> {
        if n >= self.len() {
            return self.rows.clone();
        }
        let mut idx: Vec<usize> = (0..self.len()).collect();
        idx.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
        let mut chosen = idx[..n].to_vec();
        chosen.sort_unstable();
        chosen.into_iter().map(|i| self.rows[i].clone()).collect()
    }

    /// Column projection onto a subset of feature names.
    pub fn project(&self, names: &[String]) -> Result<Dataset, ModelError> {
        let target = self.schema.features.project(names)?;
        let rows = self
            .rows
            .iter()
            .map(|r| r.project(&target))
            .collect::<Result<Vec<_>, _>>()?;
        Ok(Dataset {
            schema: DatasetSchema {
                features: target,
                classes: self.schema.classes.clone(),
            },
            rows,
            labels: self.labels.clone(),
            provenance: self.provenance.clone(),
        })
    }

    /// Copy with one row's label replaced.
    pub fn with_label(&self, row: usize, label: &str) -> Result<Dataset, ModelError> {
        if row >= self.len() {
            return Err(ModelError::IndexOutOfRange {
                index: row,
                len: self.len(),
            });
        }
        let l = self
            .schema
            .class_index(label)
            .ok_or_else(|| ModelError::UnknownLabel(label.to_string()))?;
        let mut out = self.clone();
        out.labels[row] = l;
        Ok(out)
    }

    pub(crate) fn set_label_index(&mut self, row: usize, label: usize) {
        self.labels[row] = label;
    }
}
