//! What-if: re-evaluate a predict surface, or the whole pipeline, with some
//! feature values replaced.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::XaiError;
use crate::graph::{EngineError, Pipeline, RunOptions, RunOutcome, TraceEvent};
use crate::payload::{ClassScores, Decision, FeatureVector, PayloadError};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WhatIfRequest {
    pub base: FeatureVector,
    #[serde(default)]
    pub overrides: BTreeMap<String, f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WhatIfResult {
    /// The exact composite vector that was evaluated.
    pub applied: FeatureVector,
    pub scores: ClassScores,
}

/// Pipeline-level what-if: a dry run whose trace is kept under `trace_ref`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PipelineWhatIf {
    pub applied: FeatureVector,
    pub outcome: RunOutcome,
    /// Last class distribution produced in the run (before any override).
    pub scores: Option<ClassScores>,
    /// The would-be released decision, if the run completed.
    pub decision: Option<Decision>,
    pub trace_ref: String,
    pub trace: Vec<TraceEvent>,
}

fn apply(req: &WhatIfRequest) -> Result<FeatureVector, XaiError> {
    for (name, value) in &req.overrides {
        if req.base.get(name).is_none() {
            return Err(XaiError::UnknownFeature(name.clone()));
        }
        if !value.is_finite() {
            return Err(XaiError::NonFiniteValue(name.clone()));
        }
    }
    req.base
        .with_overrides(req.overrides.iter().map(|(k, v)| (k.as_str(), *v)))
        .map_err(|e| match e {
            PayloadError::UnknownFeature(n) => XaiError::UnknownFeature(n),
            PayloadError::NonFinite { name, .. } => XaiError::NonFiniteValue(name),
            other => XaiError::SchemaMismatch(other.to_string()),
        })
}

pub fn what_if(
    f: &dyn Fn(&FeatureVector) -> Result<ClassScores, XaiError>,
    req: &WhatIfRequest,
) -> Result<WhatIfResult, XaiError> {
    let applied = apply(req)?;
    let scores = f(&applied)?;
    Ok(WhatIfResult { applied, scores })
}

/// Runs the full flow in dry-run mode so guard and bias effects are visible
/// while LogicBomb resets stay suppressed.
pub fn what_if_pipeline(pipeline: &Pipeline, req: &WhatIfRequest) -> Result<PipelineWhatIf, XaiError> {
    let applied = apply(req)?;
    let report = pipeline
        .execute_with(&applied, &RunOptions::dry_run())
        .map_err(|e| match e {
            EngineError::InputSchema(p) => XaiError::SchemaMismatch(p.to_string()),
            other => XaiError::Predict(other.to_string()),
        })?;
    Ok(PipelineWhatIf {
        applied,
        decision: report.outcome.status.decision().cloned(),
        trace_ref: report.outcome.run_id.clone(),
        outcome: report.outcome,
        scores: report.scores,
        trace: report.events,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::payload::labels;

    fn base() -> FeatureVector {
        FeatureVector::from_pairs("t", [("a".to_string(), 1.0), ("b".to_string(), 2.0)]).unwrap()
    }

    fn f(x: &FeatureVector) -> Result<ClassScores, XaiError> {
        let p = 1.0 / (1.0 + (-x.values()[0]).exp());
        Ok(ClassScores::new(labels(&["n", "y"]), vec![1.0 - p, p]).unwrap())
    }

    #[test]
    fn empty_and_self_overrides_are_identity() {
        let plain = what_if(&f, &WhatIfRequest { base: base(), overrides: BTreeMap::new() }).unwrap();
        assert_eq!(plain.scores, f(&base()).unwrap());
        let same = BTreeMap::from([("a".to_string(), 1.0)]);
        let r = what_if(&f, &WhatIfRequest { base: base(), overrides: same }).unwrap();
        assert_eq!(r.scores, plain.scores);
        assert_eq!(r.applied, base());
    }

    #[test]
    fn overrides_apply_and_are_checked() {
        let r = what_if(&f, &WhatIfRequest { base: base(), overrides: BTreeMap::from([("a".into(), -3.0)]) }).unwrap();
        assert_eq!(r.applied.get("a"), Some(-3.0));
        assert_eq!(r.applied.get("b"), Some(2.0));
        let unknown = WhatIfRequest { base: base(), overrides: BTreeMap::from([("zz".into(), 1.0)]) };
        assert_eq!(what_if(&f, &unknown).unwrap_err(), XaiError::UnknownFeature("zz".into()));
        let nan = WhatIfRequest { base: base(), overrides: BTreeMap::from([("a".into(), f64::NAN)]) };
        assert_eq!(what_if(&f, &nan).unwrap_err(), XaiError::NonFiniteValue("a".into()));
    }
}
