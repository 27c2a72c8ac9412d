//! Randomized pipelines for property tests: filter → [stop] → split →
//! branches of custom scorers (each followed by 0–2 tempering blocks) →
//! aggregator → [bias] → guard → [bomb]. Block ids are drawn from a
//! shuffled pool so tie-breaking in the topological order varies.

#![allow(dead_code)]

use std::collections::BTreeMap;

use glassflow_core::graph::{behavior, build_topology, HandlerBindings, PipelineGraph, Topology};
use glassflow_core::payload::{labels, ClassScores, FeatureSchema, FeatureVector, Payload, PayloadKind};
use proptest::prelude::*;
use serde_json::{json, Value};

pub const FEATURES: [&str; 3] = ["a", "b", "c"];

#[derive(Debug, Clone)]
pub struct Plan {
    pub pool: Vec<String>,
    pub chains: Vec<usize>,
    pub filter_min: f64,
    pub guard_threshold: f64,
    pub bias: Option<f64>,
    pub bomb: Option<f64>,
    pub majority: bool,
    pub stop: bool,
}

pub fn plan() -> impl Strategy<Value = Plan> {
    let pool: Vec<String> = (0..40).map(|i| format!("n{i:02}")).collect();
    (
        Just(pool).prop_shuffle(),
        prop::collection::vec(0usize..=2, 2..=4),
        -2.0..2.0f64,
        0.5..1.0f64,
        prop::option::of(-3.0..3.0f64),
        prop::option::of(-2.0..2.0f64),
        any::<bool>(),
        any::<bool>(),
    )
        .prop_map(|(pool, chains, filter_min, guard_threshold, bias, bomb, majority, stop)| Plan {
            pool,
            chains,
            filter_min,
            guard_threshold,
            bias,
            bomb,
            majority,
            stop,
        })
}

pub fn input() -> impl Strategy<Value = [f64; 3]> {
    [-3.0..3.0f64, -3.0..3.0f64, -3.0..3.0f64]
}

pub fn vector(v: [f64; 3]) -> FeatureVector {
    FeatureVector::from_pairs("p", FEATURES.iter().map(|s| s.to_string()).zip(v)).unwrap()
}

/// Role name → block id.
pub struct Ids(BTreeMap<String, String>);

impl Ids {
    pub fn get(&self, role: &str) -> &str {
        &self.0[role]
    }
}

fn spec(id: &str, kind: &str, input: &str, output: &str, config: Value) -> Value {
    json!({"id": id, "kind": kind, "input_payload": input, "output_payload": output, "config": config})
}

impl Plan {
    pub fn ids(&self) -> Ids {
        let mut roles = vec!["filter".to_string(), "stop".into(), "split".into(), "agg".into(), "bias".into(), "guard".into(), "bomb".into()];
        for (i, &len) in self.chains.iter().enumerate() {
            roles.push(format!("m{i}"));
            for j in 0..len {
                roles.push(format!("t{i}_{j}"));
            }
        }
        Ids(roles.into_iter().zip(self.pool.iter().cloned()).collect())
    }

    pub fn topology(&self) -> Topology {
        let ids = self.ids();
        let id = |r: &str| ids.get(r).to_string();
        let mut blocks = vec![
            spec(&id("filter"), "NonGoalFilter", "FeatureVector", "FeatureVector", json!({"rules": [
                {"id": "a_floor", "predicate": {"field": "a", "op": "ge", "value": self.filter_min}, "reject_message": "a too small"}
            ]})),
            spec(&id("split"), "Splitter", "FeatureVector", "FeatureVector", json!({"mode": "broadcast"})),
            spec(&id("agg"), "Aggregator", "ClassScores", "ClassScores",
                json!({"strategy": if self.majority { "majority_vote" } else { "mean_probability" }})),
            spec(&id("guard"), "DivineRuleGuard", "ClassScores", "Decision", json!({"rules": [
                {"id": "confident", "priority": 1, "condition": {"field": "decision.score", "op": "gt", "value": self.guard_threshold},
                 "replacement": {"label": "neg", "score": 1.0}}
            ]})),
        ];
        let mut edges = Vec::new();
        if self.stop {
            blocks.push(spec(&id("stop"), "ShutdownTrigger", "FeatureVector", "FeatureVector", Value::Null));
            edges.push([id("filter"), id("stop")]);
            edges.push([id("stop"), id("split")]);
        } else {
            edges.push([id("filter"), id("split")]);
        }
        for (i, &len) in self.chains.iter().enumerate() {
            let m = id(&format!("m{i}"));
            blocks.push(spec(&m, "Model", "FeatureVector", "ClassScores", Value::Null));
            edges.push([id("split"), m.clone()]);
            let mut last = m;
            for j in 0..len {
                let t = id(&format!("t{i}_{j}"));
                blocks.push(spec(&t, "Preprocessor", "ClassScores", "ClassScores", Value::Null));
                edges.push([last, t.clone()]);
                last = t;
            }
            edges.push([last, id("agg")]);
        }
        let mut tail = id("agg");
        if let Some(delta) = self.bias {
            blocks.push(spec(&id("bias"), "BiasInjector", "ClassScores", "ClassScores",
                json!({"offsets": {"pos": delta}, "active": true})));
            edges.push([tail, id("bias")]);
            tail = id("bias");
        }
        edges.push([tail, id("guard")]);
        let mut exit = id("guard");
        if let Some(t) = self.bomb {
            blocks.push(spec(&id("bomb"), "LogicBomb", "Decision", "Decision",
                json!({"condition": {"field": "b", "op": "gt", "value": t}, "description": "b above bound"})));
            edges.push([id("guard"), id("bomb")]);
            exit = id("bomb");
        }
        serde_json::from_value(json!({
            "blocks": blocks,
            "edges": edges,
            "entry": id("filter"),
            "exit": exit,
            "input_schema": {"id": "p", "features": FEATURES},
            "classes": ["neg", "pos"],
        }))
        .unwrap()
    }

    pub fn bindings(&self) -> HandlerBindings {
        let ids = self.ids();
        let mut b = HandlerBindings::new();
        for (i, &len) in self.chains.iter().enumerate() {
            let w = i as f64 + 1.0;
            b = b.bind(
                ids.get(&format!("m{i}")),
                behavior(PayloadKind::FeatureVector, PayloadKind::ClassScores, move |p| {
                    let Payload::FeatureVector(x) = p else { return Err("expected a feature vector".into()) };
                    let v = x.values();
                    let z = 0.7 * w * v[0] - 0.5 * (w - 1.0) * v[1] + 0.3 * v[2] + 0.1 * w;
                    let pos = 1.0 / (1.0 + (-z).exp());
                    ClassScores::new(labels(&["neg", "pos"]), vec![1.0 - pos, pos])
                        .map(Payload::ClassScores)
                        .map_err(|e| e.to_string())
                }),
            );
            for j in 0..len {
                b = b.bind(
                    ids.get(&format!("t{i}_{j}")),
                    behavior(PayloadKind::ClassScores, PayloadKind::ClassScores, |p| {
                        let Payload::ClassScores(s) = p else { return Err("expected scores".into()) };
                        let sq: Vec<f64> = s.probs().iter().map(|q| q * q + 1e-12).collect();
                        ClassScores::from_weights(s.labels().clone(), &sq)
                            .map(Payload::ClassScores)
                            .map_err(|e| e.to_string())
                    }),
                );
            }
        }
        b
    }

    pub fn build(&self) -> PipelineGraph {
        build_topology(self.topology(), self.bindings()).unwrap()
    }
}

pub fn schema() -> std::sync::Arc<FeatureSchema> {
    FeatureSchema::new("p", FEATURES.iter().map(|s| s.to_string()).collect()).unwrap()
}
