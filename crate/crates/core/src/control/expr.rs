//! Declarative rule conditions.
//!
//! A [`Condition`] is a conjunction of clauses; each clause is either one
//! [`Comparison`] or a single-level OR group. Comparisons read an input
//! feature by name, or the proposed decision through the reserved fields
//! `decision.label` and `decision.score`.
//!
//! ```json
//! {"all": [
//!   {"field": "cholesterol", "op": "gt", "value": 400},
//!   {"any": [
//!     {"field": "decision.label", "op": "eq", "value": "no_disease"},
//!     {"field": "decision.score", "op": "lt", "value": 0.6}
//!   ]}
//! ]}
//! ```

use std::fmt;

use serde::{Deserialize, Serialize};

use super::ControlError;
use crate::payload::{Decision, FeatureSchema, FeatureVector, Labels};

pub const DECISION_LABEL: &str = "decision.label";
pub const DECISION_SCORE: &str = "decision.score";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Literal {
    Number(f64),
    Text(String),
}

impl fmt::Display for Literal {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Literal::Number(n) => write!(f, "{n}"),
            Literal::Text(s) => write!(f, "{s:?}"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "op", rename_all = "snake_case")]
pub enum Test {
    Lt { value: f64 },
    Le { value: f64 },
    Eq { value: Literal },
    Ge { value: f64 },
    Gt { value: f64 },
    InRange { min: f64, max: f64 },
    InSet { values: Vec<Literal> },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Comparison {
    pub field: String,
    #[serde(flatten)]
    pub test: Test,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Clause {
    Any { any: Vec<Comparison> },
    Single(Comparison),
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(from = "ConditionDoc")]
pub struct Condition {
    pub all: Vec<Clause>,
}

#[derive(Deserialize)]
#[serde(untagged)]
enum ConditionDoc {
    All { all: Vec<Clause> },
    Single(Comparison),
}

impl From<ConditionDoc> for Condition {
    fn from(doc: ConditionDoc) -> Self {
        match doc {
            ConditionDoc::All { all } => Condition { all },
            ConditionDoc::Single(c) => Condition {
                all: vec![Clause::Single(c)],
            },
        }
    }
}

/// What a condition may read.
#[derive(Clone, Copy)]
pub struct Scope<'a> {
    pub features: &'a FeatureSchema,
    /// `Some` when decision fields are allowed; holds the valid labels.
    pub decision_labels: Option<&'a Labels>,
}

enum Value<'a> {
    Number(f64),
    Text(&'a str),
}

impl Comparison {
    pub fn new(field: impl Into<String>, test: Test) -> Self {
        Comparison {
            field: field.into(),
            test,
        }
    }

    fn read<'a>(
        &self,
        x: &'a FeatureVector,
        decision: Option<&'a Decision>,
    ) -> Result<Value<'a>, ControlError> {
        match self.field.as_str() {
            DECISION_LABEL => decision
                .map(|d| Value::Text(d.label.as_str()))
                .ok_or(ControlError::NoDecision),
            DECISION_SCORE => decision
                .map(|d| Value::Number(d.score))
                .ok_or(ControlError::NoDecision),
            name => x
                .get(name)
                .map(Value::Number)
                .ok_or_else(|| ControlError::UnknownFeature(name.to_string())),
        }
    }

    pub fn holds(&self, x: &FeatureVector, decision: Option<&Decision>) -> Result<bool, ControlError> {
        let value = self.read(x, decision)?;
        let mismatch = || ControlError::InvalidRule {
            field: self.field.clone(),
            message: "operand type does not match field".into(),
        };
        Ok(match (&self.test, value) {
            (Test::Lt { value }, Value::Number(v)) => v < *value,
            (Test::Le { value }, Value::Number(v)) => v <= *value,
            (Test::Ge { value }, Value::Number(v)) => v >= *value,
            (Test::Gt { value }, Value::Number(v)) => v > *value,
            (Test::InRange { min, max }, Value::Number(v)) => *min <= v && v <= *max,
            (Test::Eq { value }, v) => literal_eq(value, &v).ok_or_else(mismatch)?,
            (Test::InSet { values }, v) => {
                let mut hit = false;
                for lit in values {
                    if literal_eq(lit, &v).ok_or_else(mismatch)? {
                        hit = true;
                        break;
                    }
                }
                hit
            }
            (_, Value::Text(_)) => return Err(mismatch()),
        })
    }

    pub fn validate(&self, scope: Scope<'_>) -> Result<(), ControlError> {
        let err = |message: &str| ControlError::InvalidRule {
            field: self.field.clone(),
            message: message.to_string(),
        };
        let textual = match self.field.as_str() {
            DECISION_LABEL | DECISION_SCORE if scope.decision_labels.is_none() => {
                return Err(err("decision fields are not available here"))
            }
            DECISION_LABEL => true,
            DECISION_SCORE => false,
            name => {
                if scope.features.index_of(name).is_none() {
                    return Err(ControlError::UnknownFeature(name.to_string()));
                }
                false
            }
        };
        let check_literal = |lit: &Literal| -> Result<(), ControlError> {
            match (lit, textual) {
                (Literal::Number(n), false) if n.is_finite() => Ok(()),
                (Literal::Number(_), false) => Err(err("constant must be finite")),
                (Literal::Text(label), true) => {
                    let labels = scope.decision_labels.expect("checked above");
                    if labels.iter().any(|l| l == label) {
                        Ok(())
                    } else {
                        Err(err(&format!("unknown class label `{label}`")))
                    }
                }
                (Literal::Text(_), false) => Err(err("expected a number")),
                (Literal::Number(_), true) => Err(err("expected a class label")),
            }
        };
        match &self.test {
            Test::Lt { value } | Test::Le { value } | Test::Ge { value } | Test::Gt { value } => {
                if textual {
                    return Err(err("ordering comparisons need a numeric field"));
                }
                check_literal(&Literal::Number(*value))
            }
            Test::InRange { min, max } => {
                if textual {
                    return Err(err("in_range needs a numeric field"));
                }
                if !(min.is_finite() && max.is_finite()) {
                    return Err(err("range bounds must be finite"));
                }
                if min > max {
                    return Err(err("range bounds out of order (min > max)"));
                }
                Ok(())
            }
            Test::Eq { value } => check_literal(value),
            Test::InSet { values } => {
                if values.is_empty() {
                    return Err(err("in_set needs at least one value"));
                }
                values.iter().try_for_each(check_literal)
            }
        }
    }
}

fn literal_eq(lit: &Literal, v: &Value<'_>) -> Option<bool> {
    match (lit, v) {
        (Literal::Number(a), Value::Number(b)) => Some(a == b),
        (Literal::Text(a), Value::Text(b)) => Some(a == b),
        _ => None,
    }
}

impl fmt::Display for Comparison {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let field = &self.field;
        match &self.test {
            Test::Lt { value } => write!(f, "{field} < {value}"),
            Test::Le { value } => write!(f, "{field} <= {value}"),
            Test::Eq { value } => write!(f, "{field} == {value}"),
            Test::Ge { value } => write!(f, "{field} >= {value}"),
            Test::Gt { value } => write!(f, "{field} > {value}"),
            Test::InRange { min, max } => write!(f, "{field} in [{min}, {max}]"),
            Test::InSet { values } => {
                let items: Vec<String> = values.iter().map(ToString::to_string).collect();
                write!(f, "{field} in {{{}}}", items.join(", "))
            }
        }
    }
}

impl Clause {
    fn holds(&self, x: &FeatureVector, decision: Option<&Decision>) -> Result<bool, ControlError> {
        match self {
            Clause::Single(c) => c.holds(x, decision),
            Clause::Any { any } => {
                for c in any {
                    if c.holds(x, decision)? {
                        return Ok(true);
                    }
                }
                Ok(false)
            }
        }
    }

    fn comparisons(&self) -> &[Comparison] {
        match self {
            Clause::Single(c) => std::slice::from_ref(c),
            Clause::Any { any } => any,
        }
    }
}

impl Condition {
    pub fn single(c: Comparison) -> Self {
        Condition {
            all: vec![Clause::Single(c)],
        }
    }

    pub fn and(mut self, c: Comparison) -> Self {
        self.all.push(Clause::Single(c));
        self
    }

    pub fn and_any(mut self, any: Vec<Comparison>) -> Self {
        self.all.push(Clause::Any { any });
        self
    }

    /// Conjunction; the empty condition holds.
    pub fn holds(&self, x: &FeatureVector, decision: Option<&Decision>) -> Result<bool, ControlError> {
        for clause in &self.all {
            if !clause.holds(x, decision)? {
                return Ok(false);
            }
        }
        Ok(true)
    }

    pub fn validate(&self, scope: Scope<'_>) -> Result<(), ControlError> {
        for clause in &self.all {
            if let Clause::Any { any } = clause {
                if any.is_empty() {
                    return Err(ControlError::InvalidRule {
                        field: "any".into(),
                        message: "OR group must not be empty".into(),
                    });
                }
            }
            for c in clause.comparisons() {
                c.validate(scope)?;
            }
        }
        Ok(())
    }

    pub fn comparisons(&self) -> impl Iterator<Item = &Comparison> {
        self.all.iter().flat_map(Clause::comparisons)
    }
}

impl fmt::Display for Condition {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.all.is_empty() {
            return f.write_str("true");
        }
        let parts: Vec<String> = self
            .all
            .iter()
            .map(|c| match c {
                Clause::Single(c) => c.to_string(),
                Clause::Any { any } => {
                    let inner: Vec<String> = any.iter().map(ToString::to_string).collect();
                    format!("({})", inner.join(" OR "))
                }
            })
            .collect();
        f.write_str(&parts.join(" AND "))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::payload::labels;

    fn x() -> FeatureVector {
        FeatureVector::from_pairs("s", [("age".to_string(), 54.0), ("chol".to_string(), 450.0)]).unwrap()
    }

    #[test]
    fn parses_all_ops() {
        let json = r#"{"all":[
            {"field":"age","op":"in_range","min":0,"max":120},
            {"any":[{"field":"chol","op":"gt","value":400},{"field":"chol","op":"lt","value":100}]},
            {"field":"age","op":"in_set","values":[54,60]},
            {"field":"age","op":"le","value":54},
            {"field":"age","op":"ge","value":54},
            {"field":"age","op":"eq","value":54}
        ]}"#;
        let c: Condition = serde_json::from_str(json).unwrap();
        assert_eq!(c.all.len(), 6);
        assert!(c.holds(&x(), None).unwrap());
        let again: Condition = serde_json::from_str(&serde_json::to_string(&c).unwrap()).unwrap();
        assert_eq!(again, c);
    }

    #[test]
    fn bare_comparison_is_a_condition() {
        let c: Condition = serde_json::from_str(r#"{"field":"age","op":"lt","value":10}"#).unwrap();
        assert_eq!(c.all.len(), 1);
        assert!(!c.holds(&x(), None).unwrap());
    }

    #[test]
    fn decision_fields() {
        let d = Decision {
            label: "disease".into(),
            score: 0.9,
            source_block: "agg".into(),
        };
        let c = Condition::single(Comparison::new(
            DECISION_LABEL,
            Test::Eq {
                value: Literal::Text("disease".into()),
            },
        ))
        .and(Comparison::new(DECISION_SCORE, Test::Ge { value: 0.5 }));
        assert!(c.holds(&x(), Some(&d)).unwrap());
        assert!(matches!(c.holds(&x(), None), Err(ControlError::NoDecision)));
    }

    #[test]
    fn validation_messages() {
        let schema = x().schema().clone();
        let ls = labels(&["disease", "no_disease"]);
        let scope = Scope {
            features: &schema,
            decision_labels: Some(&ls),
        };
        let bad_range = Condition::single(Comparison::new("age", Test::InRange { min: 5.0, max: 1.0 }));
        assert!(matches!(bad_range.validate(scope), Err(ControlError::InvalidRule { .. })));
        let unknown = Condition::single(Comparison::new("bmi", Test::Gt { value: 1.0 }));
        assert!(matches!(unknown.validate(scope), Err(ControlError::UnknownFeature(_))));
        let bad_label = Condition::single(Comparison::new(
            DECISION_LABEL,
            Test::Eq {
                value: Literal::Text("flu".into()),
            },
        ));
        assert!(bad_label.validate(scope).is_err());
        let no_decisions = Scope {
            features: &schema,
            decision_labels: None,
        };
        let uses_decision = Condition::single(Comparison::new(DECISION_SCORE, Test::Gt { value: 0.1 }));
        assert!(uses_decision.validate(no_decisions).is_err());
    }

    #[test]
    fn display_is_readable() {
        let c = Condition::single(Comparison::new("age", Test::InRange { min: 0.0, max: 120.0 }))
            .and_any(vec![Comparison::new("chol", Test::Gt { value: 400.0 })]);
        assert_eq!(c.to_string(), "age in [0, 120] AND (chol > 400)");
    }
}
