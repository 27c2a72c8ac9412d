//! The bundled heart-disease ensemble: input filter, broadcast splitter, a
//! decision tree and a logistic regression, a mean-probability aggregator
//! and an output guard.
//!
//! The graph is defined as a topology document so that the config file
//! shipped with the CLI and the in-process demo are the same pipeline.

use std::collections::BTreeMap;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::graph::{
    build_topology, execute_with, BlockId, BlockKind, BlockSpec, GraphError, Handler, HandlerBindings, Pipeline,
    PipelineGraph, RunOptions, RunStatus, SchemaDoc, Topology, TraceStore,
};
use crate::models::{fit_logreg, fit_tree, gen_synthetic, Dataset, LogRegParams, Model, ModelError, Predictor, TreeParams};
use crate::models::synthetic::{HEART_CLASSES, HEART_FEATURES, HEART_SCHEMA_ID};

pub const DEMO_ROWS: usize = 1000;
pub const DEMO_SEED: u64 = 42;
pub const DEMO_TRAIN_FRACTION: f64 = 0.8;

/// Learner settings of a Model block's `config`.
#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(tag = "learner", rename_all = "snake_case")]
pub enum LearnerConfig {
    Cart(TreeParams),
    Logreg(LogRegParams),
}

/// Fits a model block from its config on `train`. An optional `features`
/// list in the config trains on that column subset (for column-partition
/// splitters).
pub fn fit_block(spec: &BlockSpec, train: &Dataset) -> Result<Handler, GraphError> {
    let invalid = |message: String| GraphError::InvalidConfig {
        block: spec.id.clone(),
        message,
    };
    let mut cfg = spec.config.clone();
    let features: Option<Vec<String>> = match cfg.as_object_mut().and_then(|o| o.remove("features")) {
        Some(v) => Some(serde_json::from_value(v).map_err(|e| invalid(e.to_string()))?),
        None => None,
    };
    let learner: LearnerConfig = serde_json::from_value(cfg).map_err(|e| invalid(e.to_string()))?;
    let data = match &features {
        Some(names) => train.project(names)?,
        None => train.clone(),
    };
    let model = match learner {
        LearnerConfig::Cart(p) => Model::Cart(fit_tree(&data, &p)?),
        LearnerConfig::Logreg(p) => Model::Logreg(fit_logreg(&data, &p)?),
    };
    Ok(Handler::model(model, Some(data)))
}

/// Bindings that fit every Model block on `train` from its config.
pub fn training_bindings(train: Dataset) -> HandlerBindings {
    let train = Arc::new(train);
    HandlerBindings::new().bind_kind(BlockKind::Model, move |spec| fit_block(spec, &train))
}

fn block(id: &str, kind: BlockKind, input: &str, output: &str, name: &str, description: &str, config: Value) -> Value {
    json!({
        "id": id,
        "kind": kind,
        "display_name": name,
        "description": description,
        "input_payload": input,
        "output_payload": output,
        "config": config,
    })
}

fn demo_blocks(seed: u64) -> Vec<Value> {
    vec![
        block(
            "filter",
            BlockKind::NonGoalFilter,
            "FeatureVector",
            "FeatureVector",
            "Input filter",
            "Rejects patient records outside the intended operating range.",
            json!({"rules": [
                {"id": "age_range", "predicate": {"field": "age", "op": "in_range", "min": 0, "max": 120},
                 "reject_message": "age out of range"},
                {"id": "bp_range", "predicate": {"field": "resting_bp", "op": "in_range", "min": 40, "max": 260},
                 "reject_message": "resting blood pressure out of range"}
            ]}),
        ),
        block(
            "split",
            BlockKind::Splitter,
            "FeatureVector",
            "FeatureVector",
            "Splitter",
            "Sends each record to every ensemble member.",
            json!({"mode": "broadcast"}),
        ),
        block(
            "tree_1",
            BlockKind::Model,
            "FeatureVector",
            "ClassScores",
            "Decision tree",
            "Interpretable CART decision tree (depth 4) predicting heart disease.",
            json!({"learner": "cart", "max_depth": 4, "min_samples_leaf": 5, "seed": seed, "leaf_smoothing": 1.0}),
        ),
        block(
            "logreg_1",
            BlockKind::Model,
            "FeatureVector",
            "ClassScores",
            "Logistic regression",
            "Logistic regression on standardized features predicting heart disease.",
            json!({"learner": "logreg", "learning_rate": 0.1, "epochs": 300, "l2": 0.001, "seed": seed}),
        ),
        block(
            "aggregator",
            BlockKind::Aggregator,
            "ClassScores",
            "ClassScores",
            "Aggregator",
            "Averages the ensemble members' class probabilities.",
            json!({"strategy": "mean_probability"}),
        ),
        block(
            "guard_1",
            BlockKind::DivineRuleGuard,
            "ClassScores",
            "Decision",
            "Output guard",
            "Overrides decisions that contradict clinical rules.",
            json!({"rules": [
                {"id": "very_high_cholesterol", "priority": 10,
                 "condition": {"field": "cholesterol", "op": "gt", "value": 400},
                 "replacement": {"label": "disease", "score": 1.0},
                 "rationale": "cholesterol above 400 mg/dl always warrants follow-up"}
            ]}),
        ),
    ]
}

fn heart_schema_doc() -> (SchemaDoc, Vec<String>) {
    (
        SchemaDoc {
            id: HEART_SCHEMA_ID.into(),
            features: HEART_FEATURES.iter().map(|s| s.to_string()).collect(),
        },
        HEART_CLASSES.iter().map(|s| s.to_string()).collect(),
    )
}

fn topology(blocks: Vec<Value>, edges: &[(&str, &str)], exit: &str) -> Topology {
    let (schema, classes) = heart_schema_doc();
    Topology {
        blocks: blocks
            .into_iter()
            .map(|b| serde_json::from_value(b).expect("demo block specs are well-formed"))
            .collect(),
        edges: edges.iter().map(|(a, b)| [a.to_string(), b.to_string()]).collect(),
        entry: "filter".into(),
        exit: exit.into(),
        input_schema: Some(schema),
        classes: Some(classes),
    }
}

/// filter → split → {tree_1, logreg_1} → aggregator → guard_1.
pub fn demo_topology(seed: u64) -> Topology {
    topology(
        demo_blocks(seed),
        &[
            ("filter", "split"),
            ("split", "tree_1"),
            ("split", "logreg_1"),
            ("tree_1", "aggregator"),
            ("logreg_1", "aggregator"),
            ("aggregator", "guard_1"),
        ],
        "guard_1",
    )
}

/// The demo plus every remaining control kind: an emergency-stop point
/// after the filter, score bias before the guard and a LogicBomb on the
/// released decision.
///
/// filter → stop → split → {tree_1, logreg_1} → aggregator → bias → guard_1 → bomb.
pub fn extended_topology(seed: u64) -> Topology {
    let mut blocks = demo_blocks(seed);
    blocks.insert(
        1,
        block(
            "stop",
            BlockKind::ShutdownTrigger,
            "FeatureVector",
            "FeatureVector",
            "Emergency stop",
            "Point where the global shutdown switch is honoured.",
            Value::Null,
        ),
    );
    blocks.push(block(
        "bias",
        BlockKind::BiasInjector,
        "ClassScores",
        "ClassScores",
        "Bias injector",
        "Adds configured log-space offsets to the ensemble scores.",
        json!({"offsets": {"disease": 0.0, "no_disease": 0.0}, "active": true, "rationale": "neutral by default"}),
    ));
    blocks.push(block(
        "bomb",
        BlockKind::LogicBomb,
        "Decision",
        "Decision",
        "Logic bomb",
        "Resets learned state and halts if a decision breaches operating boundaries.",
        json!({
            "condition": {"all": [
                {"field": "decision.label", "op": "eq", "value": "disease"},
                {"field": "age", "op": "lt", "value": 1}
            ]},
            "action": "reset_and_halt",
            "description": "disease decision for an infant"
        }),
    ));
    topology(
        blocks,
        &[
            ("filter", "stop"),
            ("stop", "split"),
            ("split", "tree_1"),
            ("split", "logreg_1"),
            ("tree_1", "aggregator"),
            ("logreg_1", "aggregator"),
            ("aggregator", "bias"),
            ("bias", "guard_1"),
            ("guard_1", "bomb"),
        ],
        "bomb",
    )
}

/// A built demo together with the data it was trained and held out on.
pub struct Demo {
    pub pipeline: Pipeline,
    pub train: Dataset,
    pub test: Dataset,
}

impl Demo {
    pub fn graph(&self) -> &Arc<PipelineGraph> {
        self.pipeline.graph()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DemoOptions {
    pub rows: usize,
    pub seed: u64,
    pub train_fraction: f64,
    pub extended: bool,
    pub trace_capacity: usize,
}

impl Default for DemoOptions {
    fn default() -> Self {
        DemoOptions {
            rows: DEMO_ROWS,
            seed: DEMO_SEED,
            train_fraction: DEMO_TRAIN_FRACTION,
            extended: false,
            trace_capacity: 1024,
        }
    }
}

/// Builds `topo` with its models fitted on the training part of `data`.
pub fn build_with_data(topo: Topology, data: &Dataset, opts: &DemoOptions) -> Result<Demo, GraphError> {
    if data.is_empty() {
        return Err(ModelError::EmptyDataset.into());
    }
    let (train, test) = data.split(opts.train_fraction, opts.seed);
    let graph = build_topology(topo, training_bindings(train.clone()))?;
    Ok(Demo {
        pipeline: Pipeline::with_store(Arc::new(graph), Arc::new(TraceStore::new(opts.trace_capacity))),
        train,
        test,
    })
}

pub fn build_demo(opts: &DemoOptions) -> Result<Demo, GraphError> {
    let data = gen_synthetic(opts.rows, opts.seed)?;
    let topo = if opts.extended {
        extended_topology(opts.seed)
    } else {
        demo_topology(opts.seed)
    };
    build_with_data(topo, &data, opts)
}

/// Held-out accuracy of each model block, of the aggregated distribution
/// (the last `ClassScores` of a run) and of the released decision.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Evaluation {
    pub rows: usize,
    pub members: BTreeMap<BlockId, f64>,
    pub aggregate: f64,
    pub released: f64,
    pub rejected: usize,
    pub halted: usize,
}

impl Evaluation {
    pub fn best_member(&self) -> f64 {
        self.members.values().copied().fold(f64::NEG_INFINITY, f64::max)
    }
}

/// Scores every row of `data` with dry, unrecorded runs. A run that releases
/// no decision counts as wrong for both pipeline figures.
pub fn evaluate(graph: &PipelineGraph, data: &Dataset) -> Result<Evaluation, GraphError> {
    if data.is_empty() {
        return Err(ModelError::EmptyDataset.into());
    }
    let mut members = BTreeMap::new();
    for id in graph.blocks_of_kind(BlockKind::Model) {
        let state = graph.model_state(id)?;
        let schema = state.feature_schema().clone();
        let mut correct = 0usize;
        for (i, row) in data.rows().iter().enumerate() {
            let x = if row.schema().same_layout(&schema) { row.clone() } else { row.project(&schema)? };
            if state.predict_proba(&x)?.top_label() == data.label(i) {
                correct += 1;
            }
        }
        members.insert(id.clone(), correct as f64 / data.len() as f64);
    }
    let (mut aggregate, mut released, mut rejected, mut halted) = (0usize, 0usize, 0usize, 0usize);
    for (i, row) in data.rows().iter().enumerate() {
        let report = execute_with(graph, row, &RunOptions::dry_run()).map_err(|e| GraphError::InvalidConfig {
            block: "pipeline".into(),
            message: e.to_string(),
        })?;
        match &report.outcome.status {
            RunStatus::Rejected { .. } => rejected += 1,
            RunStatus::Halted { .. } => halted += 1,
            RunStatus::Completed { decision } => {
                if decision.label == data.label(i) {
                    released += 1;
                }
                if report.scores.as_ref().is_some_and(|s| s.top_label() == data.label(i)) {
                    aggregate += 1;
                }
            }
        }
    }
    let n = data.len() as f64;
    Ok(Evaluation {
        rows: data.len(),
        members,
        aggregate: aggregate as f64 / n,
        released: released as f64 / n,
        rejected,
        halted,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::payload::FeatureVector;

    fn healthy() -> FeatureVector {
        let values = [40.0, 1.0, 0.0, 120.0, 200.0, 170.0, 0.0, 0.0];
        FeatureVector::from_pairs(HEART_SCHEMA_ID, HEART_FEATURES.iter().map(|s| s.to_string()).zip(values)).unwrap()
    }

    #[test]
    fn demo_topology_has_six_blocks_and_six_edges() {
        let t = demo_topology(DEMO_SEED);
        assert_eq!(t.blocks.len(), 6);
        assert_eq!(t.edges.len(), 6);
        let e = extended_topology(DEMO_SEED);
        assert_eq!(e.blocks.len(), 9);
        assert_eq!(e.edges.len(), 9);
    }

    #[test]
    fn demo_builds_and_classifies_a_healthy_patient() {
        let demo = build_demo(&DemoOptions::default()).unwrap();
        assert_eq!(demo.train.len(), 800);
        assert_eq!(demo.test.len(), 200);
        let report = demo.pipeline.execute(&healthy()).unwrap();
        assert_eq!(report.outcome.status.decision().unwrap().label, "no_disease");
    }

    #[test]
    fn model_config_errors_name_the_block() {
        let data = gen_synthetic(50, 1).unwrap();
        let spec = BlockSpec::new("m", BlockKind::Model, crate::payload::PayloadKind::FeatureVector, crate::payload::PayloadKind::ClassScores)
            .config(json!({"learner": "forest"}));
        assert!(matches!(fit_block(&spec, &data), Err(GraphError::InvalidConfig { block, .. }) if block == "m"));
        let spec = spec.config(json!({"learner": "cart", "features": ["age", "cholesterol"]}));
        let handler = fit_block(&spec, &data).unwrap();
        let Handler::Model(slot) = handler else { panic!("expected a model handler") };
        assert_eq!(slot.snapshot().feature_schema().len(), 2);
    }

    #[test]
    fn evaluation_counts_every_row() {
        let demo = build_demo(&DemoOptions::default()).unwrap();
        let ev = evaluate(demo.graph(), &demo.test).unwrap();
        assert_eq!(ev.rows, 200);
        assert_eq!(ev.members.len(), 2);
        assert!(ev.best_member() > 0.6);
        // Dry evaluation leaves no trace.
        assert!(demo.pipeline.store().runs().is_empty());
    }
}
