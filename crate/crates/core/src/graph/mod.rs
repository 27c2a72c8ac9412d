//! The layer-one conceptual model: block kinds, the pipeline DAG and the
//! engine that pushes one instance through it.
//!
//! Graphs are assembled with [`GraphBuilder`] (register, connect, validate)
//! or imported from a JSON topology document; both paths end in an immutable
//! [`PipelineGraph`]. Mutable block state (rules, offsets, models, the
//! shutdown flag) lives behind copy-on-write cells inside the graph and is
//! snapshotted once per run.

pub mod builder;
pub mod engine;
pub mod handler;
pub mod pipeline;
pub mod state;
pub mod topology;
pub mod trace;

use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use builder::{Block, EdgeHandle, GraphBuilder, PipelineGraph};
pub use engine::{execute, execute_with, new_run_id, EngineError, RunOptions, RunReport};
pub use handler::{
    behavior, BlockBehavior, FnBehavior, Handler, ModelSlot, ModelState, TrainedModel, Versioned,
};
pub use pipeline::{Actor, AuditContext, Pipeline, RetrainReport};
pub use state::{ResetReport, Retrained};
pub use topology::{
    build_topology, export_dot, export_topology, import_topology, parse_topology, HandlerBindings, SchemaDoc, Topology,
};
pub use trace::{EventKind, RunOutcome, RunStatus, RunSummary, TraceEvent, TraceStore, AUDIT_STREAM};

use crate::control::ControlError;
use crate::models::ModelError;
use crate::payload::{PayloadError, PayloadKind};

pub type BlockId = String;

/// The nine structural building-block kinds.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum BlockKind {
    Preprocessor,
    Model,
    NonGoalFilter,
    DivineRuleGuard,
    BiasInjector,
    ShutdownTrigger,
    LogicBomb,
    Splitter,
    Aggregator,
}

impl BlockKind {
    pub const ALL: [BlockKind; 9] = [
        BlockKind::Preprocessor,
        BlockKind::Model,
        BlockKind::NonGoalFilter,
        BlockKind::DivineRuleGuard,
        BlockKind::BiasInjector,
        BlockKind::ShutdownTrigger,
        BlockKind::LogicBomb,
        BlockKind::Splitter,
        BlockKind::Aggregator,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            BlockKind::Preprocessor => "Preprocessor",
            BlockKind::Model => "Model",
            BlockKind::NonGoalFilter => "NonGoalFilter",
            BlockKind::DivineRuleGuard => "DivineRuleGuard",
            BlockKind::BiasInjector => "BiasInjector",
            BlockKind::ShutdownTrigger => "ShutdownTrigger",
            BlockKind::LogicBomb => "LogicBomb",
            BlockKind::Splitter => "Splitter",
            BlockKind::Aggregator => "Aggregator",
        }
    }

    /// Control mechanisms, as opposed to the plain ML pipeline.
    pub fn is_control(&self) -> bool {
        !matches!(self, BlockKind::Preprocessor | BlockKind::Model)
    }
}

impl fmt::Display for BlockKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Registration record of one structural block.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BlockSpec {
    pub id: BlockId,
    pub kind: BlockKind,
    #[serde(default)]
    pub display_name: String,
    #[serde(default)]
    pub description: String,
    pub input_payload: PayloadKind,
    pub output_payload: PayloadKind,
    #[serde(default)]
    pub config: serde_json::Value,
}

impl BlockSpec {
    pub fn new(id: impl Into<BlockId>, kind: BlockKind, input: PayloadKind, output: PayloadKind) -> Self {
        let id = id.into();
        BlockSpec {
            display_name: id.clone(),
            id,
            kind,
            description: String::new(),
            input_payload: input,
            output_payload: output,
            config: serde_json::Value::Null,
        }
    }

    pub fn display_name(mut self, name: impl Into<String>) -> Self {
        self.display_name = name.into();
        self
    }

    pub fn description(mut self, text: impl Into<String>) -> Self {
        self.description = text.into();
        self
    }

    pub fn config(mut self, config: serde_json::Value) -> Self {
        self.config = config;
        self
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GraphError {
    #[error("block id `{0}` is already registered")]
    DuplicateId(BlockId),
    #[error("block id `{0}` must be nonempty and use only [A-Za-z0-9_-]")]
    InvalidId(String),
    #[error("unknown block `{0}`")]
    UnknownBlock(BlockId),
    #[error("payload mismatch at {at}: expected {expected}, found {found}")]
    PayloadMismatch {
        at: String,
        expected: PayloadKind,
        found: PayloadKind,
    },
    #[error("handler for `{block}` cannot serve kind {kind}")]
    KindMismatch { block: BlockId, kind: BlockKind },
    #[error("edge {0} -> {1} already exists")]
    DuplicateEdge(BlockId, BlockId),
    #[error("graph has no blocks")]
    EmptyGraph,
    #[error("no entry block designated")]
    MissingEntry,
    #[error("no exit block designated")]
    MissingExit,
    #[error("entry block `{0}` has inbound edges")]
    EntryHasInbound(BlockId),
    #[error("exit block `{0}` has outbound edges")]
    ExitHasOutbound(BlockId),
    #[error("cycle detected: {}", .0.join(" -> "))]
    CycleDetected(Vec<BlockId>),
    #[error("blocks not on an entry-to-exit path: {}", .0.join(", "))]
    Unreachable(Vec<BlockId>),
    #[error("splitter `{0}` needs at least 2 outbound edges")]
    SplitterFanoutTooSmall(BlockId),
    #[error("aggregator `{0}` needs at least 2 inbound edges")]
    AggregatorFaninTooSmall(BlockId),
    #[error("block `{0}` has several inbound edges but is not an aggregator")]
    AmbiguousFanIn(BlockId),
    #[error("invalid config for `{block}`: {message}")]
    InvalidConfig { block: BlockId, message: String },
    #[error("graph document error at line {line}, column {column}: {message}")]
    Schema {
        line: usize,
        column: usize,
        message: String,
    },
    #[error("no handler binding for block `{0}`")]
    MissingHandler(BlockId),
    #[error("block `{block}` is a {actual}, expected {expected}")]
    WrongKind {
        block: BlockId,
        actual: BlockKind,
        expected: &'static str,
    },
    #[error(transparent)]
    Control(#[from] ControlError),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Payload(#[from] PayloadError),
}

pub(crate) fn valid_block_id(id: &str) -> bool {
    !id.is_empty()
        && id
            .chars()
            .all(|c| c.is_ascii_alphanumeric() || c == '_' || c == '-')
}
