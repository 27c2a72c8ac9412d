//! Binary logistic regression trained by full-batch gradient descent.
//!
//! Features are z-scored with statistics stored in the model. The second
//! class label is the positive class. The objective is mean log-loss plus
//! `l2 / 2 * ||w||^2`; the bias is not penalized.

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use super::dataset::Dataset;
use super::ModelError;
use crate::payload::{ClassScores, FeatureSchema, FeatureVector, Labels};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LogRegParams {
    pub learning_rate: f64,
    pub epochs: usize,
    pub l2: f64,
    pub seed: u64,
}

impl Default for LogRegParams {
    fn default() -> Self {
        LogRegParams {
            learning_rate: 0.1,
            epochs: 300,
            l2: 1e-3,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogRegModel {
    pub schema: Arc<FeatureSchema>,
    pub classes: Labels,
    /// Weights on standardized features.
    pub weights: Vec<f64>,
    pub bias: f64,
    pub means: Vec<f64>,
    pub stds: Vec<f64>,
    pub params: LogRegParams,
}

fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// `ln(1 + e^z)` without overflow.
fn softplus(z: f64) -> f64 {
    if z > 0.0 {
        z + (-z).exp().ln_1p()
    } else {
        z.exp().ln_1p()
    }
}

struct Standardized {
    rows: Vec<Vec<f64>>,
    targets: Vec<f64>,
    means: Vec<f64>,
    stds: Vec<f64>,
}

fn standardize(data: &Dataset) -> Standardized {
    let means = data.feature_means();
    let stds: Vec<f64> = data
        .feature_stds()
        .into_iter()
        .map(|s| if s > 0.0 { s } else { 1.0 })
        .collect();
    let rows = data
        .rows()
        .iter()
        .map(|r| {
            r.values()
                .iter()
                .zip(means.iter().zip(&stds))
                .map(|(v, (m, s))| (v - m) / s)
                .collect()
        })
        .collect();
    let targets = data.label_indices().iter().map(|&l| l as f64).collect();
    Standardized {
        rows,
        targets,
        means,
        stds,
    }
}

fn objective(s: &Standardized, w: &[f64], b: f64, l2: f64) -> f64 {
    let n = s.rows.len() as f64;
    let data_loss: f64 = s
        .rows
        .iter()
        .zip(&s.targets)
        .map(|(x, &y)| {
            let z = b + dot(w, x);
            softplus(z) - y * z
        })
        .sum::<f64>()
        / n;
    data_loss + 0.5 * l2 * dot(w, w)
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Fits the model and returns the objective after each epoch
/// (index 0 is the objective at initialization).
pub fn fit_logreg_with_history(
    data: &Dataset,
    params: &LogRegParams,
) -> Result<(LogRegModel, Vec<f64>), ModelError> {
    if data.is_empty() {
        return Err(ModelError::EmptyDataset);
    }
    if data.classes().len() != 2 {
        return Err(ModelError::NotBinary(data.classes().len()));
    }
    if !(params.learning_rate > 0.0) || !(params.l2 >= 0.0) {
        return Err(ModelError::InvalidParameter(
            "learning_rate must be > 0 and l2 >= 0".into(),
        ));
    }
    let s = standardize(data);
    let d = data.n_features();
    let n = data.len() as f64;
    let mut w = vec![0.0; d];
    let mut b = 0.0;
    let mut history = Vec::with_capacity(params.epochs + 1);
    history.push(objective(&s, &w, b, params.l2));
    let mut grad = vec![0.0; d];
    for _ in 0..params.epochs {
        grad.iter_mut().for_each(|g| *g = 0.0);
        let mut grad_b = 0.0;
        for (x, &y) in s.rows.iter().zip(&s.targets) {
            let r = sigmoid(b + dot(&w, x)) - y;
            grad_b += r;
            for (g, xi) in grad.iter_mut().zip(x) {
                *g += r * xi;
            }
        }
        for (wj, g) in w.iter_mut().zip(&grad) {
            *wj -= params.learning_rate * (g / n + params.l2 * *wj);
        }
        b -= params.learning_rate * grad_b / n;
        history.push(objective(&s, &w, b, params.l2));
    }
    if w.iter().any(|v| !v.is_finite()) || !b.is_finite() {
        return Err(ModelError::InvalidParameter("training diverged".into()));
    }
    Ok((
        LogRegModel {
            schema: data.features().clone(),
            classes: data.classes().clone(),
            weights: w,
            bias: b,
            means: s.means,
            stds: s.stds,
            params: params.clone(),
        },
        history,
    ))
}

pub fn fit_logreg(data: &Dataset, params: &LogRegParams) -> Result<LogRegModel, ModelError> {
    fit_logreg_with_history(data, params).map(|(m, _)| m)
}

impl LogRegModel {
    pub fn positive_probability(&self, values: &[f64]) -> f64 {
        let z = self.bias
            + values
                .iter()
                .zip(&self.weights)
                .zip(self.means.iter().zip(&self.stds))
                .map(|((v, w), (m, s))| w * (v - m) / s)
                .sum::<f64>();
        sigmoid(z)
    }

    pub fn predict_proba(&self, x: &FeatureVector) -> Result<ClassScores, ModelError> {
        x.check_schema(&self.schema)?;
        let p = self.positive_probability(x.values());
        Ok(ClassScores::new(self.classes.clone(), vec![1.0 - p, p])?)
    }
}
