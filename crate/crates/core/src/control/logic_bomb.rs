//! Self-monitoring fail-safe evaluated on the final decision.

use serde::{Deserialize, Serialize};

use super::expr::{Condition, Scope};
use super::ControlError;
use crate::payload::{Decision, FeatureSchema, FeatureVector, Labels};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BoundaryAction {
    #[default]
    ResetAndHalt,
}

/// Fires when `condition` holds for (input, final decision).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundaryPredicate {
    pub condition: Condition,
    #[serde(default)]
    pub action: BoundaryAction,
    #[serde(default)]
    pub description: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "result", rename_all = "snake_case")]
pub enum BombCheck {
    Pass,
    Fired { reason: String },
}

impl BoundaryPredicate {
    pub fn validate(&self, schema: &FeatureSchema, classes: &Labels) -> Result<(), ControlError> {
        self.condition.validate(Scope {
            features: schema,
            decision_labels: Some(classes),
        })
    }

    /// A predicate that cannot hold for any decision.
    pub fn never() -> Self {
        use super::expr::{Comparison, Test, DECISION_SCORE};
        BoundaryPredicate {
            condition: Condition::single(Comparison::new(DECISION_SCORE, Test::Gt { value: 1.0 })),
            action: BoundaryAction::ResetAndHalt,
            description: "disarmed".into(),
        }
    }
}

pub fn logic_bomb_check(
    pred: &BoundaryPredicate,
    x: &FeatureVector,
    final_decision: &Decision,
) -> Result<BombCheck, ControlError> {
    if pred.condition.holds(x, Some(final_decision))? {
        let what = if pred.description.is_empty() {
            pred.condition.to_string()
        } else {
            pred.description.clone()
        };
        Ok(BombCheck::Fired {
            reason: format!("boundary breached: {what}"),
        })
    } else {
        Ok(BombCheck::Pass)
    }
}
