//! Attribution solvers over an opaque scoring function: exact Shapley,
//! KernelSHAP, LIME, and what-if evaluation.
//!
//! Solvers see a model only as a value function `&[f64] -> f64` (the score
//! of one target class). [`explain`] adapts model blocks and the whole
//! pipeline to that form and picks defaults for background data, target
//! class and sampling.

pub mod explain;
pub mod kernel_shap;
pub mod lime;
pub mod ridge;
pub mod shapley;
pub mod whatif;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use explain::{
    explain_block, explain_pipeline, model_background, pipeline_background, pipeline_score, ExplainError,
    ExplainParams,
};
pub use kernel_shap::{kernel_shap, shapley_kernel_weight, KernelShapParams};
pub use lime::{lime_explain, LimeParams};
pub use ridge::{solve_weighted_ridge, RidgeSolution};
pub use shapley::{exact_shapley, MAX_EXACT_FEATURES};
pub use whatif::{what_if, what_if_pipeline, PipelineWhatIf, WhatIfRequest, WhatIfResult};

use crate::payload::{FeatureSchema, FeatureVector};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum XaiError {
    #[error("exact enumeration supports at most {max} features, got {0}", max = MAX_EXACT_FEATURES)]
    TooManyFeatures(usize),
    #[error("background set is empty")]
    EmptyBackground,
    #[error("kernel weight undefined for coalition size {s} of {d}")]
    OutOfRange { d: usize, s: usize },
    #[error("weighted least-squares system is singular")]
    SingularSystem,
    #[error("every perturbation has negligible proximity weight; increase kernel_width")]
    DegenerateKernel,
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("unknown feature `{0}`")]
    UnknownFeature(String),
    #[error("non-finite value for feature `{0}`")]
    NonFiniteValue(String),
    #[error("unknown class `{0}`")]
    UnknownClass(String),
    #[error("schema mismatch: {0}")]
    SchemaMismatch(String),
    #[error("prediction failed: {0}")]
    Predict(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Method {
    ExactShapley,
    #[serde(rename = "KernelSHAP")]
    KernelShap,
    #[serde(rename = "LIME")]
    Lime,
}

impl Method {
    /// Parses the URL/CLI segment: `lime`, `shap`, `exact_shapley` (or `exact`).
    pub fn from_segment(s: &str) -> Option<Method> {
        match s {
            "lime" => Some(Method::Lime),
            "shap" | "kernel_shap" => Some(Method::KernelShap),
            "exact_shapley" | "exact" => Some(Method::ExactShapley),
            _ => None,
        }
    }

    pub fn segment(&self) -> &'static str {
        match self {
            Method::Lime => "lime",
            Method::KernelShap => "shap",
            Method::ExactShapley => "exact_shapley",
        }
    }

    pub const ALL: [Method; 3] = [Method::Lime, Method::KernelShap, Method::ExactShapley];
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Attribution {
    pub feature: String,
    pub value: f64,
}

/// Quality metadata. Surrogate methods report `r_squared`; Shapley methods
/// report `efficiency_residual = base + Σφ − f(x)`.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct Fidelity {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub r_squared: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub efficiency_residual: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Explanation {
    pub method: Method,
    pub target_class: String,
    pub base_value: f64,
    pub phi: Vec<Attribution>,
    pub fidelity: Fidelity,
    pub sample_count: usize,
    pub seed: u64,
}

impl Explanation {
    pub fn values(&self) -> Vec<f64> {
        self.phi.iter().map(|a| a.value).collect()
    }

    pub fn sum(&self) -> f64 {
        self.phi.iter().map(|a| a.value).sum()
    }
}

fn attributions(names: &[String], phi: &[f64]) -> Vec<Attribution> {
    names
        .iter()
        .zip(phi)
        .map(|(n, v)| Attribution {
            feature: n.clone(),
            value: *v,
        })
        .collect()
}

/// Reference rows for the interventional value function.
#[derive(Debug, Clone, PartialEq)]
pub struct BackgroundSet {
    names: Vec<String>,
    rows: Vec<Vec<f64>>,
    means: Vec<f64>,
    stds: Vec<f64>,
}

impl BackgroundSet {
    pub fn new(rows: &[FeatureVector]) -> Result<Self, XaiError> {
        let first = rows.first().ok_or(XaiError::EmptyBackground)?;
        let schema: &FeatureSchema = first.schema();
        for r in rows {
            r.check_schema(schema).map_err(|e| XaiError::SchemaMismatch(e.to_string()))?;
        }
        Self::from_values(schema.names.clone(), rows.iter().map(|r| r.values().to_vec()).collect())
    }

    pub fn from_values(names: Vec<String>, rows: Vec<Vec<f64>>) -> Result<Self, XaiError> {
        if rows.is_empty() {
            return Err(XaiError::EmptyBackground);
        }
        let d = names.len();
        if rows.iter().any(|r| r.len() != d) {
            return Err(XaiError::SchemaMismatch("background rows differ in length".into()));
        }
        let n = rows.len() as f64;
        let means: Vec<f64> = (0..d).map(|j| rows.iter().map(|r| r[j]).sum::<f64>() / n).collect();
        let stds = (0..d)
            .map(|j| (rows.iter().map(|r| (r[j] - means[j]).powi(2)).sum::<f64>() / n).sqrt())
            .collect();
        Ok(BackgroundSet {
            names,
            rows,
            means,
            stds,
        })
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn rows(&self) -> &[Vec<f64>] {
        &self.rows
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    /// Per-feature means (the set's summary).
    pub fn means(&self) -> &[f64] {
        &self.means
    }

    /// Per-feature population standard deviations.
    pub fn stds(&self) -> &[f64] {
        &self.stds
    }

    fn check_instance(&self, x: &FeatureVector) -> Result<(), XaiError> {
        if x.names() != self.names.as_slice() {
            return Err(XaiError::SchemaMismatch(format!(
                "instance schema `{}` differs from the background's features",
                x.schema_id()
            )));
        }
        Ok(())
    }
}

/// Scores a raw value vector for the target class.
pub type ValueFn<'a> = dyn Fn(&[f64]) -> Result<f64, XaiError> + Sync + 'a;

/// Interventional coalition value: features in `mask` come from `x`, the
/// rest from each background row; the scores are averaged.
pub(crate) fn coalition_value(
    f: &ValueFn<'_>,
    x: &[f64],
    bg: &BackgroundSet,
    in_coalition: impl Fn(usize) -> bool,
    scratch: &mut Vec<f64>,
) -> Result<f64, XaiError> {
    let mut total = 0.0;
    for row in &bg.rows {
        scratch.clear();
        scratch.extend((0..x.len()).map(|j| if in_coalition(j) { x[j] } else { row[j] }));
        total += f(scratch)?;
    }
    Ok(total / bg.rows.len() as f64)
}
