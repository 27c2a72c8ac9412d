//! A graph plus its trace store: the single entry point through which runs
//! are recorded and control mutations are audited.

use std::sync::Arc;

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use super::builder::PipelineGraph;
use super::engine::{execute_with, EngineError, RunOptions, RunReport};
use super::trace::{TraceEvent, TraceStore};
use super::{BlockId, GraphError};
use crate::control::{AggregationStrategy, BiasConfig, BoundaryPredicate, ShutdownAck, ShutdownState};
use crate::models::{accuracy, Predictor, Relabel, RelabelRecord};
use crate::payload::FeatureVector;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Actor {
    Operator,
    Agent,
}

/// Who performs a control action, and through which tool.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AuditContext {
    pub actor: Actor,
    pub author: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub tool: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub call_id: Option<String>,
}

impl AuditContext {
    pub fn operator(author: impl Into<String>) -> Self {
        AuditContext {
            actor: Actor::Operator,
            author: author.into(),
            tool: None,
            call_id: None,
        }
    }

    pub fn agent(tool: impl Into<String>, call_id: impl Into<String>) -> Self {
        AuditContext {
            actor: Actor::Agent,
            author: "agent".into(),
            tool: Some(tool.into()),
            call_id: Some(call_id.into()),
        }
    }

    pub fn with_tool(mut self, tool: impl Into<String>) -> Self {
        self.tool = Some(tool.into());
        self
    }
}

/// Outcome of a retrain, for operators comparing before and after.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RetrainReport {
    pub block: BlockId,
    pub records: Vec<RelabelRecord>,
    pub training_rows: usize,
    /// Accuracy on the relabeled training data, old model.
    pub accuracy_before: f64,
    /// Accuracy on the relabeled training data, new model.
    pub accuracy_after: f64,
    /// Training rows whose predicted label changed.
    pub changed_predictions: Vec<usize>,
}

#[derive(Debug)]
pub struct Pipeline {
    graph: Arc<PipelineGraph>,
    store: Arc<TraceStore>,
}

impl Pipeline {
    pub fn new(graph: PipelineGraph) -> Self {
        Pipeline::with_store(Arc::new(graph), Arc::new(TraceStore::default()))
    }

    pub fn with_store(graph: Arc<PipelineGraph>, store: Arc<TraceStore>) -> Self {
        Pipeline { graph, store }
    }

    pub fn graph(&self) -> &Arc<PipelineGraph> {
        &self.graph
    }

    pub fn store(&self) -> &Arc<TraceStore> {
        &self.store
    }

    pub fn execute(&self, input: &FeatureVector) -> Result<RunReport, EngineError> {
        self.execute_with(input, &RunOptions::default())
    }

    /// Runs and stores the trace; a failed run's partial trace is stored too.
    pub fn execute_with(&self, input: &FeatureVector, opts: &RunOptions) -> Result<RunReport, EngineError> {
        match execute_with(&self.graph, input, opts) {
            Ok(report) => {
                self.store.record_run(report.events.clone());
                Ok(report)
            }
            Err(err) => {
                if let EngineError::HandlerFailure { events, .. } = &err {
                    self.store.record_run(events.clone());
                }
                Err(err)
            }
        }
    }

    fn audit(&self, ctx: &AuditContext, action: &str, block: Option<&str>, detail: Value) -> TraceEvent {
        self.store.audit(
            block,
            json!({
                "action": action,
                "actor": ctx.actor,
                "author": ctx.author,
                "tool": ctx.tool,
                "call_id": ctx.call_id,
                "detail": detail,
            }),
        )
    }

    /// Records a read-only tool invocation (agent calls are always audited).
    pub fn record_tool_call(&self, ctx: &AuditContext, block: Option<&str>, detail: Value) -> TraceEvent {
        self.audit(ctx, "tool_call", block, detail)
    }

    pub fn shutdown_status(&self) -> ShutdownState {
        self.graph.shutdown().state()
    }

    pub fn trigger_shutdown(&self, ctx: &AuditContext, reason: &str) -> ShutdownAck {
        let ack = self.graph.shutdown().trigger(reason, &ctx.author);
        self.audit(ctx, "trigger_shutdown", None, serde_json::to_value(&ack).unwrap_or_default());
        ack
    }

    pub fn clear_shutdown(&self, ctx: &AuditContext) -> ShutdownAck {
        let ack = self.graph.shutdown().clear(&ctx.author);
        self.audit(ctx, "clear_shutdown", None, serde_json::to_value(&ack).unwrap_or_default());
        ack
    }

    pub fn create_rule(&self, ctx: &AuditContext, block: &str, doc: Value) -> Result<Value, GraphError> {
        let rule = self.graph.create_rule(block, doc)?;
        self.audit(ctx, "create_rule", Some(block), json!({ "rule": rule }));
        Ok(rule)
    }

    pub fn update_rule(&self, ctx: &AuditContext, block: &str, rule_id: &str, doc: Value) -> Result<Value, GraphError> {
        let rule = self.graph.update_rule(block, rule_id, doc)?;
        self.audit(ctx, "update_rule", Some(block), json!({ "rule": rule }));
        Ok(rule)
    }

    pub fn delete_rule(&self, ctx: &AuditContext, block: &str, rule_id: &str) -> Result<Value, GraphError> {
        let rule = self.graph.delete_rule(block, rule_id)?;
        self.audit(ctx, "delete_rule", Some(block), json!({ "rule": rule }));
        Ok(rule)
    }

    pub fn set_bias_config(&self, ctx: &AuditContext, block: &str, cfg: BiasConfig) -> Result<Arc<BiasConfig>, GraphError> {
        let before = self.graph.bias_config(block)?;
        let after = self.graph.set_bias_config(block, cfg)?;
        self.audit(ctx, "set_offsets", Some(block), json!({ "before": *before, "after": *after }));
        Ok(after)
    }

    pub fn set_boundary(
        &self,
        ctx: &AuditContext,
        block: &str,
        pred: BoundaryPredicate,
    ) -> Result<Arc<BoundaryPredicate>, GraphError> {
        let before = self.graph.boundary(block)?;
        let after = self.graph.set_boundary(block, pred)?;
        self.audit(ctx, "set_predicate", Some(block), json!({ "before": *before, "after": *after }));
        Ok(after)
    }

    pub fn set_strategy(
        &self,
        ctx: &AuditContext,
        block: &str,
        strategy: AggregationStrategy,
    ) -> Result<Arc<AggregationStrategy>, GraphError> {
        let before = self.graph.strategy(block)?;
        let after = self.graph.set_strategy(block, strategy)?;
        self.audit(ctx, "set_strategy", Some(block), json!({ "before": *before, "after": *after }));
        Ok(after)
    }

    pub fn retrain(&self, ctx: &AuditContext, block: &str, relabels: &[Relabel]) -> Result<RetrainReport, GraphError> {
        let r = self.graph.retrain(block, relabels)?;
        let data = r.after.training.as_deref().expect("retrained models keep their data");
        let mut changed = Vec::new();
        for (i, row) in data.rows().iter().enumerate() {
            let old = r.before.predict_proba(row)?;
            let new = r.after.predict_proba(row)?;
            if old.argmax() != new.argmax() {
                changed.push(i);
            }
        }
        let report = RetrainReport {
            block: block.to_string(),
            records: r.records,
            training_rows: data.len(),
            accuracy_before: accuracy(&*r.before, data)?,
            accuracy_after: accuracy(&*r.after, data)?,
            changed_predictions: changed,
        };
        self.audit(
            ctx,
            "retrain",
            Some(block),
            json!({
                "records": report.records,
                "accuracy_before": report.accuracy_before,
                "accuracy_after": report.accuracy_after,
                "changed_predictions": report.changed_predictions.len(),
            }),
        );
        Ok(report)
    }
}
