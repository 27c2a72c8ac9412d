//! Block behaviors and the mutable state they carry.

use std::fmt;
use std::sync::Arc;

use parking_lot::RwLock;
use serde_json::Value;

use super::{BlockKind, BlockSpec, GraphError};
use crate::control::{AggregationStrategy, BiasConfig, BoundaryPredicate, FilterRule, GuardRule, GuardRuleSet, SplitMode};
use crate::models::{Dataset, Model, ModelError, Predictor};
use crate::payload::{ClassScores, FeatureSchema, FeatureVector, Labels, Payload, PayloadKind};

/// Copy-on-write cell: readers take an `Arc` snapshot, writers swap it.
pub struct Versioned<T> {
    cell: RwLock<Arc<T>>,
}

impl<T> Versioned<T> {
    pub fn new(value: T) -> Self {
        Versioned {
            cell: RwLock::new(Arc::new(value)),
        }
    }

    pub fn snapshot(&self) -> Arc<T> {
        self.cell.read().clone()
    }

    pub fn replace(&self, value: T) -> Arc<T> {
        std::mem::replace(&mut *self.cell.write(), Arc::new(value))
    }

    /// Read-modify-write under the writer lock.
    pub fn update<E>(&self, f: impl FnOnce(&T) -> Result<T, E>) -> Result<Arc<T>, E> {
        let mut guard = self.cell.write();
        let next = Arc::new(f(&guard)?);
        *guard = next.clone();
        Ok(next)
    }
}

impl<T: fmt::Debug> fmt::Debug for Versioned<T> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        self.snapshot().fmt(f)
    }
}

/// A developer-supplied block function (the registration-time analogue of
/// decorating a function).
pub trait BlockBehavior: Send + Sync {
    fn input_kind(&self) -> PayloadKind;
    fn output_kind(&self) -> PayloadKind;
    fn process(&self, input: &Payload) -> Result<Payload, String>;
}

pub struct FnBehavior<F> {
    input: PayloadKind,
    output: PayloadKind,
    f: F,
}

impl<F> BlockBehavior for FnBehavior<F>
where
    F: Fn(&Payload) -> Result<Payload, String> + Send + Sync,
{
    fn input_kind(&self) -> PayloadKind {
        self.input
    }

    fn output_kind(&self) -> PayloadKind {
        self.output
    }

    fn process(&self, input: &Payload) -> Result<Payload, String> {
        (self.f)(input)
    }
}

/// Wraps a closure as a custom block handler.
pub fn behavior<F>(input: PayloadKind, output: PayloadKind, f: F) -> Handler
where
    F: Fn(&Payload) -> Result<Payload, String> + Send + Sync + 'static,
{
    Handler::Custom(Arc::new(FnBehavior { input, output, f }))
}

#[derive(Clone)]
pub enum TrainedModel {
    Native(Model),
    External(Arc<dyn Predictor>),
}

impl fmt::Debug for TrainedModel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            TrainedModel::Native(m) => write!(f, "Native({})", m.learner_name()),
            TrainedModel::External(p) => write!(f, "External({})", p.feature_schema().id),
        }
    }
}

/// A model plus the data it was fitted on (needed for retraining and as
/// explanation background).
#[derive(Debug, Clone)]
pub struct ModelState {
    pub model: TrainedModel,
    pub training: Option<Arc<Dataset>>,
}

impl ModelState {
    pub fn native(&self) -> Option<&Model> {
        match &self.model {
            TrainedModel::Native(m) => Some(m),
            TrainedModel::External(_) => None,
        }
    }

    /// Parameter equality for native models; pointer equality otherwise.
    pub fn same_parameters(&self, other: &ModelState) -> bool {
        match (&self.model, &other.model) {
            (TrainedModel::Native(a), TrainedModel::Native(b)) => a == b,
            (TrainedModel::External(a), TrainedModel::External(b)) => Arc::ptr_eq(a, b),
            _ => false,
        }
    }
}

impl Predictor for ModelState {
    fn feature_schema(&self) -> &Arc<FeatureSchema> {
        match &self.model {
            TrainedModel::Native(m) => m.feature_schema(),
            TrainedModel::External(p) => p.feature_schema(),
        }
    }

    fn classes(&self) -> &Labels {
        match &self.model {
            TrainedModel::Native(m) => m.classes(),
            TrainedModel::External(p) => p.classes(),
        }
    }

    fn predict_proba(&self, x: &FeatureVector) -> Result<ClassScores, ModelError> {
        match &self.model {
            TrainedModel::Native(m) => m.predict_proba(x),
            TrainedModel::External(p) => p.predict_proba(x),
        }
    }
}

/// Current model plus the snapshot a reset returns to.
pub struct ModelSlot {
    current: Versioned<ModelState>,
    initial: Arc<ModelState>,
}

impl ModelSlot {
    pub fn new(state: ModelState) -> Self {
        let initial = Arc::new(state);
        ModelSlot {
            current: Versioned {
                cell: RwLock::new(initial.clone()),
            },
            initial,
        }
    }

    pub fn native(model: Model, training: Option<Dataset>) -> Self {
        ModelSlot::new(ModelState {
            model: TrainedModel::Native(model),
            training: training.map(Arc::new),
        })
    }

    pub fn external(predictor: Arc<dyn Predictor>, training: Option<Dataset>) -> Self {
        ModelSlot::new(ModelState {
            model: TrainedModel::External(predictor),
            training: training.map(Arc::new),
        })
    }

    pub fn snapshot(&self) -> Arc<ModelState> {
        self.current.snapshot()
    }

    pub fn initial(&self) -> &Arc<ModelState> {
        &self.initial
    }

    pub(crate) fn cell(&self) -> &Versioned<ModelState> {
        &self.current
    }

    /// Restores the initial snapshot; returns whether anything changed.
    pub fn reset(&self) -> bool {
        let prev = self.current.replace((*self.initial).clone());
        !Arc::ptr_eq(&prev, &self.initial) && !prev.same_parameters(&self.initial)
    }
}

/// Behavior bound to a registered block.
pub enum Handler {
    Custom(Arc<dyn BlockBehavior>),
    Model(ModelSlot),
    NonGoalFilter(Versioned<Vec<FilterRule>>),
    DivineRuleGuard(Versioned<GuardRuleSet>),
    BiasInjector(Versioned<BiasConfig>),
    ShutdownTrigger,
    LogicBomb(Versioned<BoundaryPredicate>),
    Splitter(SplitMode),
    Aggregator(Versioned<AggregationStrategy>),
}

impl fmt::Debug for Handler {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Handler::Custom(b) => write!(f, "Custom({} -> {})", b.input_kind(), b.output_kind()),
            Handler::Model(m) => write!(f, "Model({:?})", m.snapshot().model),
            Handler::NonGoalFilter(r) => write!(f, "NonGoalFilter({} rules)", r.snapshot().len()),
            Handler::DivineRuleGuard(r) => write!(f, "DivineRuleGuard({} rules)", r.snapshot().rules().len()),
            Handler::BiasInjector(b) => write!(f, "BiasInjector({:?})", b.snapshot()),
            Handler::ShutdownTrigger => f.write_str("ShutdownTrigger"),
            Handler::LogicBomb(p) => write!(f, "LogicBomb({})", p.snapshot().condition),
            Handler::Splitter(m) => write!(f, "Splitter({m:?})"),
            Handler::Aggregator(s) => write!(f, "Aggregator({})", s.snapshot().name()),
        }
    }
}

fn parse_config<T: serde::de::DeserializeOwned + Default>(spec: &BlockSpec) -> Result<T, GraphError> {
    if spec.config.is_null() {
        return Ok(T::default());
    }
    serde_json::from_value(spec.config.clone()).map_err(|e| GraphError::InvalidConfig {
        block: spec.id.clone(),
        message: e.to_string(),
    })
}

#[derive(serde::Deserialize)]
struct RulesDoc<R> {
    #[serde(default = "Vec::new")]
    rules: Vec<R>,
}

impl<R> Default for RulesDoc<R> {
    fn default() -> Self {
        RulesDoc { rules: Vec::new() }
    }
}

impl Handler {
    pub fn model(model: Model, training: Option<Dataset>) -> Handler {
        Handler::Model(ModelSlot::native(model, training))
    }

    /// Builds a control-kind handler from `spec.config`. Model and
    /// preprocessor blocks need an explicit binding instead.
    pub fn from_config(spec: &BlockSpec) -> Result<Handler, GraphError> {
        Ok(match spec.kind {
            BlockKind::NonGoalFilter => {
                let doc: RulesDoc<FilterRule> = parse_config(spec)?;
                Handler::NonGoalFilter(Versioned::new(doc.rules))
            }
            BlockKind::DivineRuleGuard => {
                let doc: RulesDoc<GuardRule> = parse_config(spec)?;
                Handler::DivineRuleGuard(Versioned::new(GuardRuleSet::new(doc.rules)?))
            }
            BlockKind::BiasInjector => Handler::BiasInjector(Versioned::new(parse_config(spec)?)),
            BlockKind::ShutdownTrigger => Handler::ShutdownTrigger,
            BlockKind::LogicBomb => {
                let pred = if spec.config.is_null() {
                    BoundaryPredicate::never()
                } else {
                    serde_json::from_value(spec.config.clone()).map_err(|e| GraphError::InvalidConfig {
                        block: spec.id.clone(),
                        message: e.to_string(),
                    })?
                };
                Handler::LogicBomb(Versioned::new(pred))
            }
            BlockKind::Splitter => {
                let mode: SplitMode = parse_config(spec)?;
                mode.validate()?;
                Handler::Splitter(mode)
            }
            BlockKind::Aggregator => {
                let s: AggregationStrategy = parse_config(spec)?;
                s.validate(None)?;
                Handler::Aggregator(Versioned::new(s))
            }
            BlockKind::Model | BlockKind::Preprocessor => {
                return Err(GraphError::MissingHandler(spec.id.clone()))
            }
        })
    }

    /// Current configuration document for control kinds.
    pub fn live_config(&self) -> Option<Value> {
        let to = |v: Result<Value, serde_json::Error>| v.ok();
        match self {
            Handler::NonGoalFilter(r) => Some(serde_json::json!({ "rules": *r.snapshot() })),
            Handler::DivineRuleGuard(r) => Some(serde_json::json!({ "rules": r.snapshot().rules() })),
            Handler::BiasInjector(b) => to(serde_json::to_value(&*b.snapshot())),
            Handler::LogicBomb(p) => to(serde_json::to_value(&*p.snapshot())),
            Handler::Splitter(m) => to(serde_json::to_value(m)),
            Handler::Aggregator(s) => to(serde_json::to_value(&*s.snapshot())),
            Handler::ShutdownTrigger | Handler::Custom(_) | Handler::Model(_) => None,
        }
    }

    fn serves(&self, kind: BlockKind) -> bool {
        matches!(
            (self, kind),
            (Handler::Custom(_), BlockKind::Preprocessor | BlockKind::Model)
                | (Handler::Model(_), BlockKind::Model)
                | (Handler::NonGoalFilter(_), BlockKind::NonGoalFilter)
                | (Handler::DivineRuleGuard(_), BlockKind::DivineRuleGuard)
                | (Handler::BiasInjector(_), BlockKind::BiasInjector)
                | (Handler::ShutdownTrigger, BlockKind::ShutdownTrigger)
                | (Handler::LogicBomb(_), BlockKind::LogicBomb)
                | (Handler::Splitter(_), BlockKind::Splitter)
                | (Handler::Aggregator(_), BlockKind::Aggregator)
        )
    }

    /// Payload kinds the handler consumes (any of) and produces given `input`.
    fn payloads(&self, input: PayloadKind) -> (Vec<PayloadKind>, PayloadKind) {
        use PayloadKind::*;
        match self {
            Handler::Custom(b) => (vec![b.input_kind()], b.output_kind()),
            Handler::Model(_) => (vec![FeatureVector], ClassScores),
            Handler::NonGoalFilter(_) | Handler::Splitter(_) => (vec![FeatureVector], FeatureVector),
            Handler::DivineRuleGuard(_) => (vec![ClassScores, Decision], Decision),
            Handler::BiasInjector(_) | Handler::Aggregator(_) => (vec![ClassScores], ClassScores),
            Handler::ShutdownTrigger => (vec![FeatureVector, ClassScores, Decision], input),
            Handler::LogicBomb(_) => (vec![Decision], Decision),
        }
    }

    /// Registration-time contract check against the spec.
    pub fn check_against(&self, spec: &BlockSpec) -> Result<(), GraphError> {
        if !self.serves(spec.kind) {
            return Err(GraphError::KindMismatch {
                block: spec.id.clone(),
                kind: spec.kind,
            });
        }
        let (accepts, produces) = self.payloads(spec.input_payload);
        if !accepts.contains(&spec.input_payload) {
            return Err(GraphError::PayloadMismatch {
                at: format!("input of `{}`", spec.id),
                expected: accepts[0],
                found: spec.input_payload,
            });
        }
        if produces != spec.output_payload {
            return Err(GraphError::PayloadMismatch {
                at: format!("output of `{}`", spec.id),
                expected: spec.output_payload,
                found: produces,
            });
        }
        Ok(())
    }
}
