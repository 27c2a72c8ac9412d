//! Pushes one instance through a validated graph.

use std::sync::Arc;

use serde_json::{json, Value};
use thiserror::Error;

use super::builder::PipelineGraph;
use super::handler::{BlockBehavior, Handler, ModelState};
use super::state::reset_mutable_state;
use super::trace::{EventKind, EventLog, RunOutcome, RunStatus, TraceEvent};
use super::BlockId;
use crate::control::{
    aggregate, bias_inject, logic_bomb_check, nongoal_filter, rule_guard, split, AggregationStrategy, BiasConfig,
    BombCheck, BoundaryPredicate, FilterRule, FilterVerdict, GuardRuleSet, SplitMode,
};
use crate::models::Predictor;
use crate::payload::{ClassScores, FeatureVector, Payload, PayloadError};

#[derive(Debug, Clone, Default)]
pub struct RunOptions {
    /// Record the trace with the dry-run flag and suppress control side
    /// effects (the LogicBomb reset).
    pub dry_run: bool,
    /// Fixed run id; a random 128-bit hex id is generated otherwise.
    pub run_id: Option<String>,
}

impl RunOptions {
    pub fn dry_run() -> Self {
        RunOptions {
            dry_run: true,
            run_id: None,
        }
    }
}

#[derive(Debug, Clone)]
pub struct RunReport {
    pub outcome: RunOutcome,
    pub events: Vec<TraceEvent>,
    /// The last class distribution produced during the run, if any.
    pub scores: Option<ClassScores>,
}

#[derive(Debug, Error, Clone)]
pub enum EngineError {
    #[error("input does not match the pipeline schema: {0}")]
    InputSchema(#[from] PayloadError),
    #[error("block `{block}` failed: {message}")]
    HandlerFailure {
        block: BlockId,
        message: String,
        run_id: String,
        /// Events recorded up to and including the failing block's entry.
        events: Vec<TraceEvent>,
    },
}

pub fn new_run_id() -> String {
    format!("{:032x}", rand::random::<u128>())
}

/// Per-run view of block state, taken at RunStarted.
enum Snapshot<'g> {
    Custom(&'g Arc<dyn BlockBehavior>),
    Model(Arc<ModelState>),
    Filter(Arc<Vec<FilterRule>>),
    Guard(Arc<GuardRuleSet>),
    Bias(Arc<BiasConfig>),
    Shutdown,
    Bomb(Arc<BoundaryPredicate>),
    Split(&'g SplitMode),
    Aggregate(Arc<AggregationStrategy>),
}

fn snapshot(handler: &Handler) -> Snapshot<'_> {
    match handler {
        Handler::Custom(b) => Snapshot::Custom(b),
        Handler::Model(slot) => Snapshot::Model(slot.snapshot()),
        Handler::NonGoalFilter(r) => Snapshot::Filter(r.snapshot()),
        Handler::DivineRuleGuard(r) => Snapshot::Guard(r.snapshot()),
        Handler::BiasInjector(c) => Snapshot::Bias(c.snapshot()),
        Handler::ShutdownTrigger => Snapshot::Shutdown,
        Handler::LogicBomb(p) => Snapshot::Bomb(p.snapshot()),
        Handler::Splitter(m) => Snapshot::Split(m),
        Handler::Aggregator(s) => Snapshot::Aggregate(s.snapshot()),
    }
}

fn to_value<T: serde::Serialize>(v: &T) -> Value {
    serde_json::to_value(v).unwrap_or(Value::Null)
}

pub fn execute(graph: &PipelineGraph, input: &FeatureVector) -> Result<RunReport, EngineError> {
    execute_with(graph, input, &RunOptions::default())
}

/// What a block produced: one payload for all successors, or one per
/// successor (splitters), or a terminal status.
enum Step {
    Output(Payload),
    PerChild(Vec<(BlockId, FeatureVector)>),
    Stop(RunStatus),
}

pub fn execute_with(graph: &PipelineGraph, input: &FeatureVector, opts: &RunOptions) -> Result<RunReport, EngineError> {
    if let Some(schema) = graph.input_schema() {
        input.check_schema(schema)?;
    }
    let run_id = opts.run_id.clone().unwrap_or_else(new_run_id);
    let mut log = EventLog::new(run_id.clone(), opts.dry_run);
    let states: Vec<Snapshot<'_>> = graph.blocks.iter().map(|b| snapshot(&b.handler)).collect();
    log.push(None, EventKind::RunStarted, json!({ "input": input, "dry_run": opts.dry_run }));

    let n = graph.blocks.len();
    // Payloads waiting at each block, one slot per inbound edge.
    let mut pending: Vec<Vec<Option<Payload>>> = graph.inbound.iter().map(|ins| vec![None; ins.len()]).collect();
    let entry = graph.position(graph.entry()).expect("validated entry");
    let exit = graph.position(graph.exit()).expect("validated exit");
    let mut scores: Option<ClassScores> = None;
    let mut released: Option<Payload> = None;

    for &i in &graph.order {
        let spec = &graph.blocks[i].spec;
        let id = spec.id.as_str();
        let fail = |log: EventLog, message: String| EngineError::HandlerFailure {
            block: id.to_string(),
            message,
            run_id: run_id.clone(),
            events: log.events,
        };

        if graph.shutdown().is_active() {
            let reason = graph.shutdown().reason().unwrap_or_else(|| "shutdown active".into());
            log.push(None, EventKind::Halted, json!({ "reason": reason, "scope": "global" }));
            return Ok(finish_halted(log, run_id, reason, "global".into(), scores));
        }

        let inputs: Vec<Payload> = if i == entry {
            vec![Payload::FeatureVector(input.clone())]
        } else {
            match pending[i].iter_mut().map(Option::take).collect::<Option<Vec<_>>>() {
                Some(v) => v,
                None => return Err(fail(log, "an inbound payload never arrived".into())),
            }
        };
        let entered = if inputs.len() == 1 {
            json!({ "input": inputs[0] })
        } else {
            let from = graph.inbound[i].iter().map(|&j| &graph.blocks[j].spec.id);
            json!({
                "inputs": from.zip(&inputs).map(|(f, p)| json!({"from": f, "payload": p})).collect::<Vec<_>>()
            })
        };
        log.push(Some(id), EventKind::BlockEntered, entered);

        let step = match run_block(&states[i], graph, i, &inputs, input, opts, &mut log) {
            Ok(step) => step,
            Err(message) => return Err(fail(log, message)),
        };
        match step {
            Step::Stop(status) => return Ok(finish(log, run_id, status, scores)),
            Step::Output(out) => {
                if out.kind() != spec.output_payload {
                    let msg = format!("produced {} but declares {}", out.kind(), spec.output_payload);
                    return Err(fail(log, msg));
                }
                if let Payload::ClassScores(s) = &out {
                    scores = Some(s.clone());
                }
                log.push(Some(id), EventKind::BlockOutput, json!({ "output": out }));
                deliver(graph, i, &out, &mut pending);
                if i == exit {
                    released = Some(out);
                }
            }
            Step::PerChild(parts) => {
                let outputs: Vec<Value> = parts.iter().map(|(c, v)| json!({"to": c, "payload": Payload::FeatureVector(v.clone())})).collect();
                log.push(Some(id), EventKind::BlockOutput, json!({ "outputs": outputs }));
                for (child, v) in parts {
                    let c = graph.position(&child).expect("splitter children are blocks");
                    let slot = graph.inbound[c].iter().position(|&j| j == i).expect("edge exists");
                    pending[c][slot] = Some(Payload::FeatureVector(v));
                }
            }
        }
    }
    debug_assert!(pending.iter().all(|p| p.iter().all(Option::is_none)) || n == 0);

    let decision = match released {
        Some(Payload::Decision(d)) => d,
        Some(Payload::ClassScores(s)) => s.decide(graph.exit().clone()),
        _ => {
            return Err(EngineError::HandlerFailure {
                block: graph.exit().clone(),
                message: "exit released no decision".into(),
                run_id,
                events: log.events,
            })
        }
    };
    Ok(finish(log, run_id, RunStatus::Completed { decision }, scores))
}

fn deliver(graph: &PipelineGraph, from: usize, out: &Payload, pending: &mut [Vec<Option<Payload>>]) {
    for &c in &graph.outbound[from] {
        let slot = graph.inbound[c].iter().position(|&j| j == from).expect("edge exists");
        pending[c][slot] = Some(out.clone());
    }
}

fn finish_halted(
    log: EventLog,
    run_id: String,
    reason: String,
    block: String,
    scores: Option<ClassScores>,
) -> RunReport {
    RunReport {
        outcome: RunOutcome {
            run_id,
            status: RunStatus::Halted { reason, block },
        },
        events: log.events,
        scores,
    }
}

fn finish(mut log: EventLog, run_id: String, status: RunStatus, scores: Option<ClassScores>) -> RunReport {
    if let RunStatus::Halted { reason, block } = status {
        return finish_halted(log, run_id, reason, block, scores);
    }
    let outcome = RunOutcome { run_id, status };
    log.push(None, EventKind::RunFinished, to_value(&outcome));
    RunReport {
        outcome,
        events: log.events,
        scores,
    }
}

fn single(inputs: &[Payload]) -> Result<&Payload, String> {
    match inputs {
        [p] => Ok(p),
        _ => Err(format!("expected one input payload, got {}", inputs.len())),
    }
}

fn feature_vector(inputs: &[Payload]) -> Result<&FeatureVector, String> {
    match single(inputs)? {
        Payload::FeatureVector(v) => Ok(v),
        other => Err(format!("expected FeatureVector, got {}", other.kind())),
    }
}

fn class_scores(inputs: &[Payload]) -> Result<&ClassScores, String> {
    match single(inputs)? {
        Payload::ClassScores(s) => Ok(s),
        other => Err(format!("expected ClassScores, got {}", other.kind())),
    }
}

#[allow(clippy::too_many_arguments)]
fn run_block(
    state: &Snapshot<'_>,
    graph: &PipelineGraph,
    i: usize,
    inputs: &[Payload],
    run_input: &FeatureVector,
    opts: &RunOptions,
    log: &mut EventLog,
) -> Result<Step, String> {
    let id = graph.blocks[i].spec.id.as_str();
    let err = |e: &dyn std::fmt::Display| e.to_string();
    Ok(match state {
        Snapshot::Custom(b) => Step::Output(b.process(single(inputs)?)?),
        Snapshot::Model(m) => Step::Output(Payload::ClassScores(
            m.predict_proba(feature_vector(inputs)?).map_err(|e| err(&e))?,
        )),
        Snapshot::Filter(rules) => {
            let x = feature_vector(inputs)?;
            match nongoal_filter(rules, x).map_err(|e| err(&e))? {
                FilterVerdict::Accept => Step::Output(Payload::FeatureVector(x.clone())),
                FilterVerdict::Reject { rule_id, reason } => {
                    log.push(Some(id), EventKind::InputRejected, json!({ "rule_id": rule_id, "reason": reason }));
                    Step::Stop(RunStatus::Rejected {
                        reason,
                        block: id.to_string(),
                    })
                }
            }
        }
        Snapshot::Guard(rules) => {
            let proposed = match single(inputs)? {
                Payload::Decision(d) => d.clone(),
                Payload::ClassScores(s) => {
                    let upstream = graph.inbound[i].first().map(|&j| graph.blocks[j].spec.id.clone());
                    s.decide(upstream.unwrap_or_else(|| id.to_string()))
                }
                other => return Err(format!("guard cannot consume {}", other.kind())),
            };
            let (decision, record) = rule_guard(rules, run_input, &proposed, &id.to_string()).map_err(|e| err(&e))?;
            if let Some(record) = record {
                log.push(Some(id), EventKind::OutputOverridden, to_value(&record));
            }
            Step::Output(Payload::Decision(decision))
        }
        Snapshot::Bias(cfg) => {
            let (out, record) = bias_inject(cfg, class_scores(inputs)?).map_err(|e| err(&e))?;
            log.push(Some(id), EventKind::BiasApplied, to_value(&record));
            Step::Output(Payload::ClassScores(out))
        }
        Snapshot::Shutdown => Step::Output(single(inputs)?.clone()),
        Snapshot::Bomb(pred) => {
            let decision = match single(inputs)? {
                Payload::Decision(d) => d,
                other => return Err(format!("logic bomb cannot consume {}", other.kind())),
            };
            match logic_bomb_check(pred, run_input, decision).map_err(|e| err(&e))? {
                BombCheck::Pass => Step::Output(Payload::Decision(decision.clone())),
                BombCheck::Fired { reason } => {
                    if opts.dry_run {
                        log.push(
                            Some(id),
                            EventKind::Halted,
                            json!({ "reason": reason, "scope": "block", "reset_suppressed": true }),
                        );
                    } else {
                        let report = reset_mutable_state(graph);
                        log.push(Some(id), EventKind::Reset, to_value(&report));
                        log.push(Some(id), EventKind::Halted, json!({ "reason": reason, "scope": "block" }));
                    }
                    Step::Stop(RunStatus::Halted {
                        reason,
                        block: id.to_string(),
                    })
                }
            }
        }
        Snapshot::Split(mode) => {
            let x = feature_vector(inputs)?;
            let children: Vec<BlockId> = graph.outbound[i].iter().map(|&c| graph.blocks[c].spec.id.clone()).collect();
            Step::PerChild(split(mode, x, &children).map_err(|e| err(&e))?)
        }
        Snapshot::Aggregate(strategy) => {
            let branches = inputs
                .iter()
                .map(|p| match p {
                    Payload::ClassScores(s) => Ok(s.clone()),
                    other => Err(format!("aggregator cannot consume {}", other.kind())),
                })
                .collect::<Result<Vec<_>, _>>()?;
            let (out, record) = aggregate(strategy, &branches).map_err(|e| err(&e))?;
            log.push(Some(id), EventKind::Aggregated, to_value(&record));
            Step::Output(Payload::ClassScores(out))
        }
    })
}
