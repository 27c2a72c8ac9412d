//! Runtime reads and writes of block state: rule CRUD, bias offsets,
//! boundary predicates, aggregation strategies, retraining and reset.
//!
//! These methods do not audit; [`super::Pipeline`] wraps them so that every
//! successful mutation writes exactly one audit event.

use std::sync::Arc;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use super::builder::{check_unique_ids, PipelineGraph};
use super::handler::{Handler, ModelSlot, ModelState, TrainedModel};
use super::{BlockId, BlockKind, GraphError};
use crate::control::{AggregationStrategy, BiasConfig, BoundaryPredicate, ControlError, FilterRule, GuardRule, GuardRuleSet};
use crate::models::{retrain_with_relabels, ModelError, Relabel, RelabelRecord};

/// What a LogicBomb reset touched.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct ResetReport {
    /// Bias blocks whose offsets were set to zero.
    pub bias_zeroed: Vec<BlockId>,
    /// Model blocks restored to their initial snapshot.
    pub models_reverted: Vec<BlockId>,
    /// Subset of the above whose state actually changed.
    pub changed: Vec<BlockId>,
}

/// Zeroes every bias offset and reverts every model to its initial snapshot.
/// Guard/filter rules, predicates and topology are operator-owned and kept.
pub(crate) fn reset_mutable_state(graph: &PipelineGraph) -> ResetReport {
    let mut report = ResetReport::default();
    for block in &graph.blocks {
        let id = &block.spec.id;
        match &block.handler {
            Handler::BiasInjector(cfg) => {
                let prev = cfg.replace(cfg.snapshot().zeroed());
                report.bias_zeroed.push(id.clone());
                if !prev.is_zero() {
                    report.changed.push(id.clone());
                }
            }
            Handler::Model(slot) => {
                report.models_reverted.push(id.clone());
                if slot.reset() {
                    report.changed.push(id.clone());
                }
            }
            _ => {}
        }
    }
    report
}

/// Result of a retrain, before and after.
#[derive(Debug, Clone)]
pub struct Retrained {
    pub before: Arc<ModelState>,
    pub after: Arc<ModelState>,
    pub records: Vec<RelabelRecord>,
}

fn parse<T: serde::de::DeserializeOwned>(block: &str, doc: Value) -> Result<T, GraphError> {
    serde_json::from_value(doc).map_err(|e| GraphError::InvalidConfig {
        block: block.to_string(),
        message: e.to_string(),
    })
}

fn wrong_kind(graph: &PipelineGraph, id: &str, expected: &'static str) -> GraphError {
    match graph.spec(id) {
        Ok(spec) => GraphError::WrongKind {
            block: id.to_string(),
            actual: spec.kind,
            expected,
        },
        Err(e) => e,
    }
}

fn to_value<T: Serialize + ?Sized>(v: &T) -> Value {
    serde_json::to_value(v).expect("rule documents serialize")
}

impl PipelineGraph {
    pub fn reset_state(&self) -> ResetReport {
        reset_mutable_state(self)
    }

    pub fn filter_rules(&self, id: &str) -> Result<Arc<Vec<FilterRule>>, GraphError> {
        match self.handler(id)? {
            Handler::NonGoalFilter(r) => Ok(r.snapshot()),
            _ => Err(wrong_kind(self, id, "NonGoalFilter")),
        }
    }

    pub fn guard_rules(&self, id: &str) -> Result<Arc<GuardRuleSet>, GraphError> {
        match self.handler(id)? {
            Handler::DivineRuleGuard(r) => Ok(r.snapshot()),
            _ => Err(wrong_kind(self, id, "DivineRuleGuard")),
        }
    }

    /// Rules of a filter or guard block as a JSON array.
    pub fn list_rules(&self, id: &str) -> Result<Value, GraphError> {
        match self.handler(id)? {
            Handler::NonGoalFilter(r) => Ok(to_value(&*r.snapshot())),
            Handler::DivineRuleGuard(r) => Ok(to_value(r.snapshot().rules())),
            _ => Err(wrong_kind(self, id, "NonGoalFilter or DivineRuleGuard")),
        }
    }

    fn check_filter_rule(&self, rule: &FilterRule) -> Result<(), GraphError> {
        check_unique_ids(std::iter::once(rule.id.as_str())).map_err(|message| ControlError::InvalidRule {
            field: "id".into(),
            message,
        })?;
        if let Some(schema) = self.input_schema() {
            rule.validate(schema)?;
        }
        Ok(())
    }

    fn check_guard_rule(&self, rule: &GuardRule) -> Result<(), GraphError> {
        match (self.input_schema(), self.classes()) {
            (Some(schema), Some(classes)) => rule.validate(schema, classes)?,
            _ => {
                if rule.id.is_empty() {
                    return Err(ControlError::InvalidRule {
                        field: "id".into(),
                        message: "rule id must not be empty".into(),
                    }
                    .into());
                }
            }
        }
        Ok(())
    }

    /// Adds one rule; returns it as stored.
    pub fn create_rule(&self, id: &str, doc: Value) -> Result<Value, GraphError> {
        match self.handler(id)? {
            Handler::NonGoalFilter(cell) => {
                let rule: FilterRule = parse(id, doc)?;
                self.check_filter_rule(&rule)?;
                cell.update(|rules| {
                    if rules.iter().any(|r| r.id == rule.id) {
                        return Err(ControlError::DuplicateRuleId(rule.id.clone()));
                    }
                    let mut next = rules.clone();
                    next.push(rule.clone());
                    Ok(next)
                })?;
                Ok(to_value(&rule))
            }
            Handler::DivineRuleGuard(cell) => {
                let rule: GuardRule = parse(id, doc)?;
                self.check_guard_rule(&rule)?;
                cell.update(|set| {
                    if set.rules().iter().any(|r| r.id == rule.id) {
                        return Err(ControlError::DuplicateRuleId(rule.id.clone()));
                    }
                    let mut next = set.rules().to_vec();
                    next.push(rule.clone());
                    GuardRuleSet::new(next)
                })?;
                Ok(to_value(&rule))
            }
            _ => Err(wrong_kind(self, id, "NonGoalFilter or DivineRuleGuard")),
        }
    }

    /// Replaces rule `rule_id`. The document's `id`, if present, must match.
    pub fn update_rule(&self, id: &str, rule_id: &str, mut doc: Value) -> Result<Value, GraphError> {
        if let Some(obj) = doc.as_object_mut() {
            match obj.get("id") {
                Some(Value::String(s)) if s != rule_id => {
                    return Err(ControlError::InvalidRule {
                        field: "id".into(),
                        message: format!("body id `{s}` does not match path id `{rule_id}`"),
                    }
                    .into())
                }
                _ => {
                    obj.insert("id".into(), Value::String(rule_id.to_string()));
                }
            }
        }
        match self.handler(id)? {
            Handler::NonGoalFilter(cell) => {
                let rule: FilterRule = parse(id, doc)?;
                self.check_filter_rule(&rule)?;
                cell.update(|rules| {
                    let pos = rules
                        .iter()
                        .position(|r| r.id == rule_id)
                        .ok_or_else(|| ControlError::UnknownRule(rule_id.to_string()))?;
                    let mut next = rules.clone();
                    next[pos] = rule.clone();
                    Ok::<_, ControlError>(next)
                })?;
                Ok(to_value(&rule))
            }
            Handler::DivineRuleGuard(cell) => {
                let rule: GuardRule = parse(id, doc)?;
                self.check_guard_rule(&rule)?;
                cell.update(|set| {
                    let pos = set
                        .rules()
                        .iter()
                        .position(|r| r.id == rule_id)
                        .ok_or_else(|| ControlError::UnknownRule(rule_id.to_string()))?;
                    let mut next = set.rules().to_vec();
                    next[pos] = rule.clone();
                    GuardRuleSet::new(next)
                })?;
                Ok(to_value(&rule))
            }
            _ => Err(wrong_kind(self, id, "NonGoalFilter or DivineRuleGuard")),
        }
    }

    /// Removes rule `rule_id`; returns the removed rule.
    pub fn delete_rule(&self, id: &str, rule_id: &str) -> Result<Value, GraphError> {
        let mut removed = Value::Null;
        match self.handler(id)? {
            Handler::NonGoalFilter(cell) => {
                cell.update(|rules| {
                    let pos = rules
                        .iter()
                        .position(|r| r.id == rule_id)
                        .ok_or_else(|| ControlError::UnknownRule(rule_id.to_string()))?;
                    let mut next = rules.clone();
                    removed = to_value(&next.remove(pos));
                    Ok::<_, ControlError>(next)
                })?;
            }
            Handler::DivineRuleGuard(cell) => {
                cell.update(|set| {
                    let pos = set
                        .rules()
                        .iter()
                        .position(|r| r.id == rule_id)
                        .ok_or_else(|| ControlError::UnknownRule(rule_id.to_string()))?;
                    let mut next = set.rules().to_vec();
                    removed = to_value(&next.remove(pos));
                    GuardRuleSet::new(next)
                })?;
            }
            _ => return Err(wrong_kind(self, id, "NonGoalFilter or DivineRuleGuard")),
        }
        Ok(removed)
    }

    pub fn bias_config(&self, id: &str) -> Result<Arc<BiasConfig>, GraphError> {
        match self.handler(id)? {
            Handler::BiasInjector(c) => Ok(c.snapshot()),
            _ => Err(wrong_kind(self, id, "BiasInjector")),
        }
    }

    pub fn set_bias_config(&self, id: &str, cfg: BiasConfig) -> Result<Arc<BiasConfig>, GraphError> {
        match self.handler(id)? {
            Handler::BiasInjector(c) => {
                if let Some(classes) = self.classes() {
                    cfg.validate(classes)?;
                }
                c.replace(cfg);
                Ok(c.snapshot())
            }
            _ => Err(wrong_kind(self, id, "BiasInjector")),
        }
    }

    pub fn boundary(&self, id: &str) -> Result<Arc<BoundaryPredicate>, GraphError> {
        match self.handler(id)? {
            Handler::LogicBomb(p) => Ok(p.snapshot()),
            _ => Err(wrong_kind(self, id, "LogicBomb")),
        }
    }

    pub fn set_boundary(&self, id: &str, pred: BoundaryPredicate) -> Result<Arc<BoundaryPredicate>, GraphError> {
        match self.handler(id)? {
            Handler::LogicBomb(p) => {
                if let Some(scope) = self.scope() {
                    pred.condition.validate(scope)?;
                }
                p.replace(pred);
                Ok(p.snapshot())
            }
            _ => Err(wrong_kind(self, id, "LogicBomb")),
        }
    }

    pub fn strategy(&self, id: &str) -> Result<Arc<AggregationStrategy>, GraphError> {
        match self.handler(id)? {
            Handler::Aggregator(s) => Ok(s.snapshot()),
            _ => Err(wrong_kind(self, id, "Aggregator")),
        }
    }

    pub fn set_strategy(&self, id: &str, strategy: AggregationStrategy) -> Result<Arc<AggregationStrategy>, GraphError> {
        match self.handler(id)? {
            Handler::Aggregator(s) => {
                strategy.validate(Some(self.inbound(id)?.len()))?;
                s.replace(strategy);
                Ok(s.snapshot())
            }
            _ => Err(wrong_kind(self, id, "Aggregator")),
        }
    }

    pub fn model_slot(&self, id: &str) -> Result<&ModelSlot, GraphError> {
        match self.handler(id)? {
            Handler::Model(slot) => Ok(slot),
            _ => Err(wrong_kind(self, id, "Model")),
        }
    }

    pub fn model_state(&self, id: &str) -> Result<Arc<ModelState>, GraphError> {
        self.model_slot(id).map(ModelSlot::snapshot)
    }

    /// Relabels the block's training data and refits with the same
    /// hyperparameters and seed; the new model is swapped in atomically.
    pub fn retrain(&self, id: &str, relabels: &[Relabel]) -> Result<Retrained, GraphError> {
        let spec = self.spec(id)?;
        if spec.kind != BlockKind::Model {
            return Err(wrong_kind(self, id, "Model"));
        }
        let slot = match self.handler(id)? {
            Handler::Model(slot) => slot,
            _ => return Err(GraphError::Model(ModelError::NotRetrainable(id.to_string()))),
        };
        let mut out = None;
        let after = slot.cell().update(|state| {
            let (TrainedModel::Native(model), Some(data)) = (&state.model, &state.training) else {
                return Err(ModelError::NotRetrainable(id.to_string()));
            };
            let result = retrain_with_relabels(model, data, relabels)?;
            out = Some((Arc::new(state.clone()), result.records));
            Ok(ModelState {
                model: TrainedModel::Native(result.model),
                training: Some(Arc::new(result.data)),
            })
        })?;
        let (before, records) = out.expect("set on success");
        Ok(Retrained { before, after, records })
    }
}
