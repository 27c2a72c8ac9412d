//! Input filtering: reject instances outside the intended operating region.

use serde::{Deserialize, Serialize};

use super::expr::{Condition, Scope};
use super::ControlError;
use crate::payload::{FeatureSchema, FeatureVector};

/// A rule describes the *allowed* region; an input outside it is rejected.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FilterRule {
    pub id: String,
    pub predicate: Condition,
    pub reject_message: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "verdict", rename_all = "snake_case")]
pub enum FilterVerdict {
    Accept,
    Reject { rule_id: String, reason: String },
}

impl FilterRule {
    pub fn validate(&self, schema: &FeatureSchema) -> Result<(), ControlError> {
        if self.id.is_empty() {
            return Err(ControlError::InvalidRule {
                field: "id".into(),
                message: "rule id must not be empty".into(),
            });
        }
        self.predicate.validate(Scope {
            features: schema,
            decision_labels: None,
        })
    }

    pub fn violated_by(&self, x: &FeatureVector) -> Result<bool, ControlError> {
        Ok(!self.predicate.holds(x, None)?)
    }
}

/// Returns the first violated rule's message, or `Accept`.
pub fn nongoal_filter(rules: &[FilterRule], x: &FeatureVector) -> Result<FilterVerdict, ControlError> {
    for rule in rules {
        if rule.violated_by(x)? {
            return Ok(FilterVerdict::Reject {
                rule_id: rule.id.clone(),
                reason: rule.reject_message.clone(),
            });
        }
    }
    Ok(FilterVerdict::Accept)
}
