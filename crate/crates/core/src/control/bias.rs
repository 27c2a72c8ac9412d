//! Inference-time bias: additive offsets in log-probability space.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::ControlError;
use crate::payload::{ClassScores, Labels};

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct BiasConfig {
    /// Per-class offsets; classes not listed get 0.
    #[serde(default)]
    pub offsets: BTreeMap<String, f64>,
    #[serde(default)]
    pub active: bool,
    #[serde(default)]
    pub rationale: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BiasRecord {
    pub active: bool,
    pub offsets: BTreeMap<String, f64>,
    pub before: ClassScores,
    pub after: ClassScores,
}

impl BiasConfig {
    pub fn validate(&self, classes: &Labels) -> Result<(), ControlError> {
        for (label, offset) in &self.offsets {
            if !classes.iter().any(|c| c == label) {
                return Err(ControlError::UnknownLabel(label.clone()));
            }
            if !offset.is_finite() {
                return Err(ControlError::InvalidRule {
                    field: format!("offsets.{label}"),
                    message: "offset must be finite".into(),
                });
            }
        }
        Ok(())
    }

    pub fn offset(&self, label: &str) -> f64 {
        self.offsets.get(label).copied().unwrap_or(0.0)
    }

    /// Same config with every offset set to zero.
    pub fn zeroed(&self) -> BiasConfig {
        BiasConfig {
            offsets: self.offsets.keys().map(|k| (k.clone(), 0.0)).collect(),
            ..self.clone()
        }
    }

    pub fn is_zero(&self) -> bool {
        self.offsets.values().all(|&v| v == 0.0)
    }
}

/// `softmax(log(scores) + offsets)`; identity when inactive.
pub fn bias_inject(cfg: &BiasConfig, scores: &ClassScores) -> Result<(ClassScores, BiasRecord), ControlError> {
    cfg.validate(scores.labels())?;
    let after = if cfg.active {
        let offsets: Vec<f64> = scores.labels().iter().map(|l| cfg.offset(l)).collect();
        // p * e^(o - max o) avoids log(0) and overflow
        let top = offsets.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let weights: Vec<f64> = scores
            .probs()
            .iter()
            .zip(&offsets)
            .map(|(p, o)| p * (o - top).exp())
            .collect();
        ClassScores::from_weights(scores.labels().clone(), &weights)?
    } else {
        scores.clone()
    };
    let record = BiasRecord {
        active: cfg.active,
        offsets: cfg.offsets.clone(),
        before: scores.clone(),
        after: after.clone(),
    };
    Ok((after, record))
}
