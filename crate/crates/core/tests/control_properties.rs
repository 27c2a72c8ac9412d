use glassflow_core::control::{
    aggregate, bias_inject, nongoal_filter, rule_guard, AggregationStrategy, BiasConfig, BoundaryPredicate,
    FilterRule, FilterVerdict, GuardRule, GuardRuleSet,
};
use glassflow_core::demo::{build_demo, DemoOptions};
use glassflow_core::graph::{AuditContext, EventKind, RunStatus};
use glassflow_core::models::Relabel;
use glassflow_core::payload::{labels, ClassScores, Decision, FeatureVector};
use proptest::prelude::*;
use serde_json::{json, Value};

// ---------- a tiny independent model of the rule language ----------

#[derive(Debug, Clone)]
enum Cmp {
    Num { field: &'static str, op: &'static str, value: f64 },
    Range { field: &'static str, min: f64, max: f64 },
    Label(&'static str),
}

#[derive(Debug, Clone)]
enum Clause {
    Single(Cmp),
    Any(Vec<Cmp>),
}

const NUM_FIELDS: [&str; 3] = ["x0", "x1", "decision.score"];
const INPUT_FIELDS: [&str; 2] = ["x0", "x1"];

fn cmp(fields: &'static [&'static str], with_label: bool) -> impl Strategy<Value = Cmp> {
    let num = (prop::sample::select(fields), prop::sample::select(&["lt", "le", "gt", "ge"][..]), -1.0..1.0f64)
        .prop_map(|(field, op, value)| Cmp::Num { field, op, value });
    let range = (prop::sample::select(fields), -1.0..1.0f64, 0.0..1.0f64)
        .prop_map(|(field, min, w)| Cmp::Range { field, min, max: min + w });
    let label = prop::sample::select(&["A", "B"][..]).prop_map(Cmp::Label);
    if with_label {
        prop_oneof![3 => num, 2 => range, 1 => label].boxed()
    } else {
        prop_oneof![num, range].boxed()
    }
}

fn condition(fields: &'static [&'static str], with_label: bool) -> impl Strategy<Value = Vec<Clause>> {
    let clause = prop_oneof![
        3 => cmp(fields, with_label).prop_map(Clause::Single),
        1 => prop::collection::vec(cmp(fields, with_label), 1..3).prop_map(Clause::Any),
    ];
    prop::collection::vec(clause, 1..3)
}

fn cmp_json(c: &Cmp) -> Value {
    match c {
        Cmp::Num { field, op, value } => json!({"field": field, "op": op, "value": value}),
        Cmp::Range { field, min, max } => json!({"field": field, "op": "in_range", "min": min, "max": max}),
        Cmp::Label(l) => json!({"field": "decision.label", "op": "eq", "value": l}),
    }
}

fn condition_json(clauses: &[Clause]) -> Value {
    let all: Vec<Value> = clauses
        .iter()
        .map(|c| match c {
            Clause::Single(c) => cmp_json(c),
            Clause::Any(cs) => json!({"any": cs.iter().map(cmp_json).collect::<Vec<_>>()}),
        })
        .collect();
    json!({ "all": all })
}

fn read(field: &str, x: &[f64; 2], d: Option<&Decision>) -> f64 {
    match field {
        "x0" => x[0],
        "x1" => x[1],
        "decision.score" => d.unwrap().score,
        other => panic!("unexpected field {other}"),
    }
}

fn cmp_holds(c: &Cmp, x: &[f64; 2], d: Option<&Decision>) -> bool {
    match c {
        Cmp::Num { field, op, value } => {
            let v = read(field, x, d);
            match *op {
                "lt" => v < *value,
                "le" => v <= *value,
                "gt" => v > *value,
                "ge" => v >= *value,
                _ => unreachable!(),
            }
        }
        Cmp::Range { field, min, max } => {
            let v = read(field, x, d);
            *min <= v && v <= *max
        }
        Cmp::Label(l) => d.unwrap().label == *l,
    }
}

fn holds(clauses: &[Clause], x: &[f64; 2], d: Option<&Decision>) -> bool {
    clauses.iter().all(|c| match c {
        Clause::Single(c) => cmp_holds(c, x, d),
        Clause::Any(cs) => cs.iter().any(|c| cmp_holds(c, x, d)),
    })
}

fn fv(x: &[f64; 2]) -> FeatureVector {
    FeatureVector::from_pairs("s", [("x0".to_string(), x[0]), ("x1".to_string(), x[1])]).unwrap()
}

#[derive(Debug, Clone)]
struct GenRule {
    priority: i64,
    condition: Vec<Clause>,
    label: &'static str,
    score: f64,
}

fn guard_rules() -> impl Strategy<Value = Vec<GenRule>> {
    (1usize..6)
        .prop_flat_map(|n| {
            (
                Just((0i64..20).collect::<Vec<_>>()).prop_shuffle(),
                prop::collection::vec(
                    (condition(&NUM_FIELDS, true), prop::sample::select(&["A", "B"][..]), 0.0..=1.0f64),
                    n,
                ),
            )
        })
        .prop_map(|(prios, rules)| {
            rules
                .into_iter()
                .zip(prios)
                .map(|((condition, label, score), priority)| GenRule { priority, condition, label, score })
                .collect()
        })
}

fn proposed() -> impl Strategy<Value = Decision> {
    (prop::sample::select(&["A", "B"][..]), 0.0..=1.0f64).prop_map(|(l, s)| Decision {
        label: l.into(),
        score: s,
        source_block: "agg".into(),
    })
}

fn scores2() -> impl Strategy<Value = ClassScores> {
    (0.0..=1.0f64).prop_map(|p| ClassScores::new(labels(&["A", "B"]), vec![p, 1.0 - p]).unwrap())
}

fn scores3() -> impl Strategy<Value = ClassScores> {
    [0.0..1.0f64, 0.0..1.0f64, 0.0..1.0f64].prop_map(|w| {
        let w = [w[0] + 1e-9, w[1] + 1e-9, w[2] + 1e-9];
        ClassScores::from_weights(labels(&["A", "B", "C"]), &w).unwrap()
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(1000))]

    /// Either no rule matches and the proposal passes through, or the output
    /// is the replacement of the lowest-priority matching rule.
    #[test]
    fn guard_output_follows_first_match(rules in guard_rules(), x in [-1.5..1.5f64, -1.5..1.5f64], d in proposed()) {
        let set = GuardRuleSet::new(
            rules
                .iter()
                .enumerate()
                .map(|(i, r)| {
                    serde_json::from_value::<GuardRule>(json!({
                        "id": format!("r{i}"),
                        "priority": r.priority,
                        "condition": condition_json(&r.condition),
                        "replacement": {"label": r.label, "score": r.score},
                    }))
                    .unwrap()
                })
                .collect(),
        )
        .unwrap();
        let (out, record) = rule_guard(&set, &fv(&x), &d, &"guard".to_string()).unwrap();
        let winner = rules.iter().filter(|r| holds(&r.condition, &x, Some(&d))).min_by_key(|r| r.priority);
        match winner {
            None => {
                prop_assert_eq!(out, d);
                prop_assert!(record.is_none());
            }
            Some(r) => {
                prop_assert_eq!(&out.label, r.label);
                prop_assert_eq!(out.score, r.score);
                prop_assert_eq!(out.source_block.as_str(), "guard");
                prop_assert_eq!(record.unwrap().priority, r.priority);
            }
        }
    }

    /// Accepted inputs violate no rule; a rejection cites the first rule
    /// that is genuinely violated.
    #[test]
    fn filter_is_sound(conds in prop::collection::vec(condition(&INPUT_FIELDS, false), 0..5), x in [-1.5..1.5f64, -1.5..1.5f64]) {
        let rules: Vec<FilterRule> = conds
            .iter()
            .enumerate()
            .map(|(i, c)| {
                serde_json::from_value(json!({"id": format!("f{i}"), "predicate": condition_json(c), "reject_message": format!("m{i}")}))
                    .unwrap()
            })
            .collect();
        let verdict = nongoal_filter(&rules, &fv(&x)).unwrap();
        let violated: Vec<usize> = conds.iter().enumerate().filter(|(_, c)| !holds(c, &x, None)).map(|(i, _)| i).collect();
        match verdict {
            FilterVerdict::Accept => prop_assert!(violated.is_empty()),
            FilterVerdict::Reject { rule_id, reason } => {
                prop_assert_eq!(rule_id, format!("f{}", violated[0]));
                prop_assert_eq!(reason, format!("m{}", violated[0]));
            }
        }
    }

    /// Offsets (0, δ) with δ above log(pA/pB) make B the argmax; δ = 0
    /// leaves the argmax alone.
    #[test]
    fn bias_shifts_argmax(p_a in 0.51..0.999f64, margin in 1e-6..5.0f64) {
        let s = ClassScores::new(labels(&["A", "B"]), vec![p_a, 1.0 - p_a]).unwrap();
        let delta = (p_a / (1.0 - p_a)).ln() + margin;
        let cfg = BiasConfig { offsets: [("B".to_string(), delta)].into(), active: true, rationale: String::new() };
        let (after, _) = bias_inject(&cfg, &s).unwrap();
        prop_assert_eq!(after.top_label(), "B");
        let zero = BiasConfig { offsets: [("B".to_string(), 0.0)].into(), active: true, rationale: String::new() };
        let (same, _) = bias_inject(&zero, &s).unwrap();
        prop_assert_eq!(same.top_label(), "A");
        prop_assert!((same.probs()[0] - p_a).abs() < 1e-12);
    }

    #[test]
    fn aggregation_matches_brute_force(branches in prop::collection::vec(scores3(), 3)) {
        let (vote, record) = aggregate(&AggregationStrategy::MajorityVote, &branches).unwrap();
        let mut counts = [0usize; 3];
        for b in &branches {
            let best = (0..3).fold(0, |m, i| if b.probs()[i] > b.probs()[m] { i } else { m });
            counts[best] += 1;
        }
        prop_assert_eq!(record.votes.clone().unwrap(), counts.to_vec());
        for (share, c) in vote.probs().iter().zip(counts) {
            prop_assert!((share - c as f64 / 3.0).abs() < 1e-12);
        }
        let top = *counts.iter().max().unwrap();
        if counts.iter().filter(|&&c| c == top).count() == 1 {
            prop_assert_eq!(vote.argmax(), counts.iter().position(|&c| c == top).unwrap());
        }
        let (mean, _) = aggregate(&AggregationStrategy::MeanProbability, &branches).unwrap();
        prop_assert!((mean.probs().iter().sum::<f64>() - 1.0).abs() < 1e-9);
        for k in 0..3 {
            let m = branches.iter().map(|b| b.probs()[k]).sum::<f64>() / 3.0;
            prop_assert!((mean.probs()[k] - m).abs() < 1e-12);
        }
    }

    #[test]
    fn two_branch_mean_sums_to_one(a in scores2(), b in scores2()) {
        let (mean, _) = aggregate(&AggregationStrategy::MeanProbability, &[a, b]).unwrap();
        prop_assert!((mean.probs().iter().sum::<f64>() - 1.0).abs() < 1e-9);
    }
}

fn patient(age: f64, chol: f64) -> FeatureVector {
    let names = glassflow_core::models::synthetic::HEART_FEATURES;
    let values = [age, 1.0, 0.0, 130.0, chol, 150.0, 1.0, 1.5];
    FeatureVector::from_pairs("heart_v1", names.iter().map(|s| s.to_string()).zip(values)).unwrap()
}

#[test]
fn shutdown_blocks_every_block_until_cleared() {
    let demo = build_demo(&DemoOptions { extended: true, ..Default::default() }).unwrap();
    let op = AuditContext::operator("tester");
    demo.pipeline.trigger_shutdown(&op, "maintenance");
    for i in 0..100 {
        let report = demo.pipeline.execute(&patient(30.0 + i as f64 * 0.4, 200.0)).unwrap();
        assert!(report.events.iter().all(|e| e.event != EventKind::BlockEntered));
        assert!(matches!(&report.outcome.status, RunStatus::Halted { block, .. } if block == "global"));
    }
    demo.pipeline.clear_shutdown(&op);
    let report = demo.pipeline.execute(&patient(50.0, 200.0)).unwrap();
    assert!(matches!(report.outcome.status, RunStatus::Completed { .. }));
}

#[test]
fn logic_bomb_resets_atomically_in_randomized_runs() {
    use rand::{Rng, SeedableRng};
    let demo = build_demo(&DemoOptions { extended: true, ..Default::default() }).unwrap();
    let graph = demo.graph().clone();
    let op = AuditContext::operator("tester");
    let always: BoundaryPredicate =
        serde_json::from_value(json!({"condition": {"field": "decision.score", "op": "ge", "value": 0.0}})).unwrap();
    demo.pipeline.set_boundary(&op, "bomb", always).unwrap();
    let initial_tree = graph.model_slot("tree_1").unwrap().initial().clone();
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(7);
    for _ in 0..200 {
        // Perturb every piece of resettable state.
        let delta: f64 = rng.random_range(-3.0..3.0);
        let cfg = BiasConfig { offsets: [("disease".to_string(), delta)].into(), active: true, rationale: "probe".into() };
        demo.pipeline.set_bias_config(&op, "bias", cfg).unwrap();
        if rng.random_bool(0.3) {
            let row = rng.random_range(0..demo.train.len());
            let flipped = if demo.train.label(row) == "disease" { "no_disease" } else { "disease" };
            demo.pipeline
                .retrain(&op, "tree_1", &[Relabel { row_index: row, new_label: flipped.into(), author: "tester".into() }])
                .unwrap();
        }
        let x = patient(rng.random_range(20.0..80.0), rng.random_range(150.0..300.0));
        let report = demo.pipeline.execute(&x).unwrap();
        assert!(report.outcome.status.decision().is_none(), "a decision was released");
        assert!(matches!(report.outcome.status, RunStatus::Halted { .. }));
        assert!(report.events.iter().any(|e| e.event == EventKind::Reset));
        assert!(graph.bias_config("bias").unwrap().is_zero());
        assert!(graph.model_state("tree_1").unwrap().same_parameters(&initial_tree));
        let logreg = graph.model_slot("logreg_1").unwrap();
        assert!(logreg.snapshot().same_parameters(logreg.initial()));
    }
}
