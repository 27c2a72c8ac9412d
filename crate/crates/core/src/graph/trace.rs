//! Audit trace: per-run event logs plus the control-plane audit stream.

use std::collections::VecDeque;

use chrono::{DateTime, Utc};
use parking_lot::Mutex;
use serde::{Deserialize, Serialize};
use serde_json::Value;

use super::BlockId;
use crate::payload::Decision;

/// Run id of the control-plane audit stream.
pub const AUDIT_STREAM: &str = "audit";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum EventKind {
    RunStarted,
    BlockEntered,
    BlockOutput,
    InputRejected,
    OutputOverridden,
    BiasApplied,
    Halted,
    Reset,
    Aggregated,
    RunFinished,
    /// A control-plane action (rule edit, retrain, shutdown, agent tool call).
    Audit,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceEvent {
    pub seq: u64,
    pub run_id: String,
    pub block_id: Option<BlockId>,
    pub event: EventKind,
    pub payload_snapshot: Value,
    pub timestamp: DateTime<Utc>,
    #[serde(default)]
    pub dry_run: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum RunStatus {
    Completed { decision: Decision },
    Rejected { reason: String, block: BlockId },
    /// `block` is `"global"` for an emergency stop.
    Halted { reason: String, block: String },
}

impl RunStatus {
    pub fn name(&self) -> &'static str {
        match self {
            RunStatus::Completed { .. } => "completed",
            RunStatus::Rejected { .. } => "rejected",
            RunStatus::Halted { .. } => "halted",
        }
    }

    pub fn decision(&self) -> Option<&Decision> {
        match self {
            RunStatus::Completed { decision } => Some(decision),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunOutcome {
    pub run_id: String,
    #[serde(flatten)]
    pub status: RunStatus,
}

/// Listing entry of one stored run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub run_id: String,
    pub status: Option<String>,
    pub events: usize,
    pub dry_run: bool,
    pub started: Option<DateTime<Utc>>,
}

/// Builds one run's event list with consecutive sequence numbers.
#[derive(Debug)]
pub(crate) struct EventLog {
    run_id: String,
    dry_run: bool,
    pub(crate) events: Vec<TraceEvent>,
}

impl EventLog {
    pub(crate) fn new(run_id: String, dry_run: bool) -> Self {
        EventLog {
            run_id,
            dry_run,
            events: Vec::new(),
        }
    }

    pub(crate) fn push(&mut self, block_id: Option<&str>, event: EventKind, payload: Value) {
        self.events.push(TraceEvent {
            seq: self.events.len() as u64,
            run_id: self.run_id.clone(),
            block_id: block_id.map(str::to_string),
            event,
            payload_snapshot: payload,
            timestamp: Utc::now(),
            dry_run: self.dry_run,
        });
    }
}

struct StoredRun {
    run_id: String,
    events: Vec<TraceEvent>,
}

struct Inner {
    runs: VecDeque<StoredRun>,
    audit: VecDeque<TraceEvent>,
    audit_seq: u64,
}

/// In-memory ring buffer of run traces, plus a bounded audit stream.
pub struct TraceStore {
    capacity: usize,
    audit_capacity: usize,
    inner: Mutex<Inner>,
}

impl std::fmt::Debug for TraceStore {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let inner = self.inner.lock();
        f.debug_struct("TraceStore")
            .field("capacity", &self.capacity)
            .field("runs", &inner.runs.len())
            .field("audit", &inner.audit.len())
            .finish()
    }
}

impl Default for TraceStore {
    fn default() -> Self {
        TraceStore::new(1024)
    }
}

impl TraceStore {
    /// Keeps the last `capacity` runs and the last `capacity * 16` audit events.
    pub fn new(capacity: usize) -> Self {
        let capacity = capacity.max(1);
        TraceStore {
            capacity,
            audit_capacity: capacity.saturating_mul(16),
            inner: Mutex::new(Inner {
                runs: VecDeque::new(),
                audit: VecDeque::new(),
                audit_seq: 0,
            }),
        }
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    /// Stores a run's complete (or partial, on handler failure) event list.
    pub fn record_run(&self, events: Vec<TraceEvent>) {
        let Some(first) = events.first() else { return };
        let run_id = first.run_id.clone();
        let mut inner = self.inner.lock();
        if inner.runs.len() == self.capacity {
            inner.runs.pop_front();
        }
        inner.runs.push_back(StoredRun { run_id, events });
    }

    /// Events of one run; `"audit"` returns the audit stream.
    pub fn run(&self, run_id: &str) -> Option<Vec<TraceEvent>> {
        let inner = self.inner.lock();
        if run_id == AUDIT_STREAM {
            return Some(inner.audit.iter().cloned().collect());
        }
        inner
            .runs
            .iter()
            .rev()
            .find(|r| r.run_id == run_id)
            .map(|r| r.events.clone())
    }

    /// Stored runs, oldest first.
    pub fn runs(&self) -> Vec<RunSummary> {
        self.inner
            .lock()
            .runs
            .iter()
            .map(|r| RunSummary {
                run_id: r.run_id.clone(),
                status: r
                    .events
                    .iter()
                    .rev()
                    .find(|e| matches!(e.event, EventKind::RunFinished | EventKind::Halted))
                    .and_then(|e| match e.event {
                        EventKind::Halted => Some("halted".to_string()),
                        _ => e.payload_snapshot.get("status").and_then(Value::as_str).map(str::to_string),
                    }),
                events: r.events.len(),
                dry_run: r.events.first().is_some_and(|e| e.dry_run),
                started: r.events.first().map(|e| e.timestamp),
            })
            .collect()
    }

    /// Appends one audit event and returns it.
    pub fn audit(&self, block_id: Option<&str>, payload: Value) -> TraceEvent {
        let mut inner = self.inner.lock();
        let event = TraceEvent {
            seq: inner.audit_seq,
            run_id: AUDIT_STREAM.to_string(),
            block_id: block_id.map(str::to_string),
            event: EventKind::Audit,
            payload_snapshot: payload,
            timestamp: Utc::now(),
            dry_run: false,
        };
        inner.audit_seq += 1;
        if inner.audit.len() == self.audit_capacity {
            inner.audit.pop_front();
        }
        inner.audit.push_back(event.clone());
        event
    }

    pub fn audit_events(&self) -> Vec<TraceEvent> {
        self.inner.lock().audit.iter().cloned().collect()
    }

    pub fn audit_len(&self) -> u64 {
        self.inner.lock().audit_seq
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn run(id: &str) -> Vec<TraceEvent> {
        let mut log = EventLog::new(id.into(), false);
        log.push(None, EventKind::RunStarted, Value::Null);
        log.push(None, EventKind::RunFinished, serde_json::json!({"status": "completed"}));
        log.events
    }

    #[test]
    fn ring_buffer_evicts_oldest() {
        let store = TraceStore::new(2);
        store.record_run(run("a"));
        store.record_run(run("b"));
        store.record_run(run("c"));
        assert!(store.run("a").is_none());
        let ids: Vec<_> = store.runs().into_iter().map(|r| r.run_id).collect();
        assert_eq!(ids, ["b", "c"]);
        assert_eq!(store.runs()[0].status.as_deref(), Some("completed"));
    }

    #[test]
    fn audit_stream_sequence() {
        let store = TraceStore::new(4);
        store.audit(Some("guard_1"), serde_json::json!({"action": "x"}));
        store.audit(None, serde_json::json!({"action": "y"}));
        let events = store.run(AUDIT_STREAM).unwrap();
        assert_eq!(events.iter().map(|e| e.seq).collect::<Vec<_>>(), [0, 1]);
        assert!(events.iter().all(|e| e.event == EventKind::Audit));
    }

    #[test]
    fn outcome_serializes_flat() {
        let o = RunOutcome {
            run_id: "r".into(),
            status: RunStatus::Halted {
                reason: "stop".into(),
                block: "global".into(),
            },
        };
        let v = serde_json::to_value(&o).unwrap();
        assert_eq!(v, serde_json::json!({"run_id": "r", "status": "halted", "reason": "stop", "block": "global"}));
    }
}
