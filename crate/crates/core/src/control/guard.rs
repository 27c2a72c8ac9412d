//! Output guarding: first-match override of a proposed decision.

use serde::{Deserialize, Serialize};

use super::expr::{Condition, Scope};
use super::ControlError;
use crate::graph::BlockId;
use crate::payload::{Decision, FeatureSchema, FeatureVector, Labels};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecisionTemplate {
    pub label: String,
    pub score: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GuardRule {
    pub id: String,
    /// Lower numbers are tried first.
    pub priority: i64,
    pub condition: Condition,
    pub replacement: DecisionTemplate,
    #[serde(default)]
    pub rationale: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OverrideRecord {
    pub rule_id: String,
    pub priority: i64,
    pub old: Decision,
    pub new: Decision,
    pub rationale: String,
}

impl GuardRule {
    pub fn validate(&self, schema: &FeatureSchema, classes: &Labels) -> Result<(), ControlError> {
        if self.id.is_empty() {
            return Err(ControlError::InvalidRule {
                field: "id".into(),
                message: "rule id must not be empty".into(),
            });
        }
        if !classes.contains(&self.replacement.label) {
            return Err(ControlError::InvalidRule {
                field: "replacement.label".into(),
                message: format!("unknown class label `{}`", self.replacement.label),
            });
        }
        if !(0.0..=1.0).contains(&self.replacement.score) {
            return Err(ControlError::InvalidRule {
                field: "replacement.score".into(),
                message: "score must lie in [0, 1]".into(),
            });
        }
        self.condition.validate(Scope {
            features: schema,
            decision_labels: Some(classes),
        })
    }
}

/// Priority-ordered rules with unique ids and priorities.
#[derive(Debug, Clone, PartialEq, Default, Serialize)]
#[serde(transparent)]
pub struct GuardRuleSet {
    rules: Vec<GuardRule>,
}

impl GuardRuleSet {
    pub fn new(mut rules: Vec<GuardRule>) -> Result<Self, ControlError> {
        rules.sort_by_key(|r| r.priority);
        for pair in rules.windows(2) {
            if pair[0].priority == pair[1].priority {
                return Err(ControlError::DuplicatePriority(pair[1].priority));
            }
        }
        let mut ids: Vec<&str> = rules.iter().map(|r| r.id.as_str()).collect();
        ids.sort_unstable();
        if let Some(w) = ids.windows(2).find(|w| w[0] == w[1]) {
            return Err(ControlError::DuplicateRuleId(w[0].to_string()));
        }
        Ok(GuardRuleSet { rules })
    }

    pub fn rules(&self) -> &[GuardRule] {
        &self.rules
    }

    pub fn into_rules(self) -> Vec<GuardRule> {
        self.rules
    }
}

/// Applies the lowest-priority matching rule, if any.
pub fn rule_guard(
    rules: &GuardRuleSet,
    x: &FeatureVector,
    proposed: &Decision,
    guard_block: &BlockId,
) -> Result<(Decision, Option<OverrideRecord>), ControlError> {
    for rule in rules.rules() {
        if rule.condition.holds(x, Some(proposed))? {
            let new = Decision {
                label: rule.replacement.label.clone(),
                score: rule.replacement.score,
                source_block: guard_block.clone(),
            };
            let record = OverrideRecord {
                rule_id: rule.id.clone(),
                priority: rule.priority,
                old: proposed.clone(),
                new: new.clone(),
                rationale: rule.rationale.clone(),
            };
            return Ok((new, Some(record)));
        }
    }
    Ok((proposed.clone(), None))
}
