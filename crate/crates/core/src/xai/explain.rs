//! Explanations of model blocks and of the whole pipeline, with the
//! defaults shared by the API and the CLI (same inputs, same bytes).

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::{
    exact_shapley, kernel_shap, lime_explain, BackgroundSet, Explanation, KernelShapParams, LimeParams, Method,
    XaiError,
};
use crate::graph::{execute_with, BlockKind, EngineError, GraphError, PipelineGraph, RunOptions};
use crate::models::Predictor;
use crate::payload::{ClassScores, FeatureVector, Labels};

pub const DEFAULT_BACKGROUND_ROWS: usize = 100;

/// Request parameters; all optional with documented defaults.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct ExplainParams {
    /// Seeds background sampling and the solver. Default 0.
    #[serde(default)]
    pub seed: u64,
    /// LIME perturbations (default 1000) or KernelSHAP coalitions
    /// (default `min(2^d, 2048)`).
    #[serde(default)]
    pub n_samples: Option<usize>,
    /// KernelSHAP: enumerate every coalition.
    #[serde(default)]
    pub exhaustive: bool,
    /// LIME kernel width; default `0.75·√d`.
    #[serde(default)]
    pub kernel_width: Option<f64>,
    /// LIME ridge penalty; default `1e-3`.
    #[serde(default)]
    pub ridge_lambda: Option<f64>,
    /// Background rows sampled from training data; default 100.
    #[serde(default)]
    pub background_size: Option<usize>,
    /// Class whose score is explained; default the predicted class.
    #[serde(default)]
    pub target_class: Option<String>,
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ExplainError {
    #[error(transparent)]
    Graph(#[from] GraphError),
    #[error(transparent)]
    Xai(#[from] XaiError),
}

fn background_rows(params: &ExplainParams) -> usize {
    params.background_size.unwrap_or(DEFAULT_BACKGROUND_ROWS).max(1)
}

/// Background for a model block: seeded sample of its training data.
pub fn model_background(graph: &PipelineGraph, block: &str, params: &ExplainParams) -> Result<BackgroundSet, ExplainError> {
    let state = graph.model_state(block)?;
    let data = state.training.as_deref().ok_or(XaiError::EmptyBackground)?;
    Ok(BackgroundSet::new(&data.sample_rows(background_rows(params), params.seed))?)
}

/// Background for the pipeline: training data of the first model block
/// whose features match the pipeline input.
pub fn pipeline_background(graph: &PipelineGraph, params: &ExplainParams) -> Result<BackgroundSet, ExplainError> {
    let schema = graph.input_schema();
    for id in graph.blocks_of_kind(BlockKind::Model) {
        let Ok(state) = graph.model_state(id) else { continue };
        let Some(data) = state.training.as_deref() else { continue };
        if schema.is_none_or(|s| data.features().same_layout(s)) {
            return Ok(BackgroundSet::new(&data.sample_rows(background_rows(params), params.seed))?);
        }
    }
    Err(XaiError::EmptyBackground.into())
}

fn class_index(classes: &Labels, label: &str) -> Result<usize, XaiError> {
    classes
        .iter()
        .position(|c| c == label)
        .ok_or_else(|| XaiError::UnknownClass(label.to_string()))
}

fn run(method: Method, f: &super::ValueFn<'_>, x: &FeatureVector, bg: &BackgroundSet, target: &str, p: &ExplainParams) -> Result<Explanation, XaiError> {
    match method {
        Method::ExactShapley => exact_shapley(f, x, bg, target).map(|mut e| {
            e.seed = p.seed;
            e
        }),
        Method::KernelShap => kernel_shap(
            f,
            x,
            bg,
            target,
            &KernelShapParams {
                n_samples: p.n_samples,
                exhaustive: p.exhaustive,
                seed: p.seed,
            },
        ),
        Method::Lime => lime_explain(
            f,
            x,
            bg,
            target,
            &LimeParams {
                n_samples: p.n_samples,
                kernel_width: p.kernel_width,
                ridge_lambda: p.ridge_lambda,
                seed: p.seed,
            },
        ),
    }
}

/// Explains one model block's predicted probability for the target class.
pub fn explain_block(
    graph: &PipelineGraph,
    block: &str,
    method: Method,
    x: &FeatureVector,
    params: &ExplainParams,
) -> Result<Explanation, ExplainError> {
    let state = graph.model_state(block)?;
    let schema = state.feature_schema().clone();
    x.check_schema(&schema).map_err(|e| XaiError::SchemaMismatch(e.to_string()))?;
    let classes = state.classes().clone();
    let target = match &params.target_class {
        Some(t) => t.clone(),
        None => state
            .predict_proba(x)
            .map_err(|e| XaiError::Predict(e.to_string()))?
            .top_label()
            .to_string(),
    };
    let k = class_index(&classes, &target)?;
    let bg = model_background(graph, block, params)?;
    let f = |z: &[f64]| -> Result<f64, XaiError> {
        let v = FeatureVector::new(schema.clone(), z.to_vec()).map_err(|e| XaiError::Predict(e.to_string()))?;
        let s = state.predict_proba(&v).map_err(|e| XaiError::Predict(e.to_string()))?;
        Ok(s.probs()[k])
    };
    Ok(run(method, &f, x, &bg, &target, params)?)
}

/// The pipeline as a scoring function: the released decision spread back
/// into a distribution, or `None` when the run is rejected or halted.
/// Runs are dry and unrecorded, so explaining has no side effects.
pub fn pipeline_score(graph: &PipelineGraph, x: &FeatureVector) -> Result<Option<ClassScores>, XaiError> {
    let report = execute_with(graph, x, &RunOptions::dry_run()).map_err(|e| match e {
        EngineError::InputSchema(p) => XaiError::SchemaMismatch(p.to_string()),
        other => XaiError::Predict(other.to_string()),
    })?;
    let Some(decision) = report.outcome.status.decision() else {
        return Ok(None);
    };
    let classes = match (graph.classes(), &report.scores) {
        (Some(c), _) => c.clone(),
        (None, Some(s)) => s.labels().clone(),
        (None, None) => return Err(XaiError::Predict("pipeline class labels are unknown".into())),
    };
    decision
        .as_scores(&classes)
        .map(Some)
        .map_err(|e| XaiError::Predict(e.to_string()))
}

/// Explains the pipeline's score for the target class (zero for runs that
/// release no decision).
pub fn explain_pipeline(
    graph: &PipelineGraph,
    method: Method,
    x: &FeatureVector,
    params: &ExplainParams,
) -> Result<Explanation, ExplainError> {
    let schema = match graph.input_schema() {
        Some(s) => s.clone(),
        None => x.schema().clone(),
    };
    x.check_schema(&schema).map_err(|e| XaiError::SchemaMismatch(e.to_string()))?;
    let base_scores = pipeline_score(graph, x)?;
    let classes: Labels = match (graph.classes(), &base_scores) {
        (Some(c), _) => c.clone(),
        (None, Some(s)) => s.labels().clone(),
        (None, None) => return Err(XaiError::Predict("pipeline class labels are unknown".into()).into()),
    };
    let target = match (&params.target_class, &base_scores) {
        (Some(t), _) => t.clone(),
        (None, Some(s)) => s.top_label().to_string(),
        (None, None) => classes[0].clone(),
    };
    let k = class_index(&classes, &target)?;
    let bg = pipeline_background(graph, params)?;
    let f = |z: &[f64]| -> Result<f64, XaiError> {
        let v = FeatureVector::new(schema.clone(), z.to_vec()).map_err(|e| XaiError::Predict(e.to_string()))?;
        Ok(pipeline_score(graph, &v)?.map_or(0.0, |s| s.probs()[k]))
    };
    Ok(run(method, &f, x, &bg, &target, params)?)
}
