//! JSON topology documents and DOT export.

use std::collections::HashMap;
use std::fmt::Write as _;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use super::builder::{GraphBuilder, PipelineGraph};
use super::handler::Handler;
use super::{BlockId, BlockKind, BlockSpec, GraphError};
use crate::control::ShutdownSwitch;
use crate::payload::{labels, FeatureSchema};

/// The graph-config document: `blocks`, `edges`, `entry`, `exit`, plus the
/// optional input schema and class labels used to validate control configs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Topology {
    pub blocks: Vec<BlockSpec>,
    pub edges: Vec<[BlockId; 2]>,
    pub entry: BlockId,
    pub exit: BlockId,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub input_schema: Option<SchemaDoc>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub classes: Option<Vec<String>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SchemaDoc {
    pub id: String,
    pub features: Vec<String>,
}

/// Control-block configs reflect live state, so an export after rule edits
/// re-imports to the edited pipeline.
pub fn export_topology(graph: &PipelineGraph) -> Topology {
    let blocks = graph
        .blocks
        .iter()
        .map(|b| {
            let mut spec = b.spec.clone();
            if let Some(cfg) = b.handler.live_config() {
                spec.config = cfg;
            }
            spec
        })
        .collect();
    Topology {
        blocks,
        edges: graph.edges().iter().map(|(f, t)| [f.clone(), t.clone()]).collect(),
        entry: graph.entry().clone(),
        exit: graph.exit().clone(),
        input_schema: graph.input_schema().map(|s| SchemaDoc {
            id: s.id.clone(),
            features: s.names.clone(),
        }),
        classes: graph.classes().map(|c| c.to_vec()),
    }
}

type Factory = Box<dyn Fn(&BlockSpec) -> Result<Handler, GraphError> + Send + Sync>;

/// Behaviors for imported blocks: explicit per-id bindings win, then
/// per-kind factories, then the control-kind default built from `config`.
#[derive(Default)]
pub struct HandlerBindings {
    by_id: HashMap<BlockId, Handler>,
    by_kind: HashMap<BlockKind, Factory>,
    shutdown: Option<Arc<ShutdownSwitch>>,
}

impl HandlerBindings {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn bind(mut self, id: impl Into<BlockId>, handler: Handler) -> Self {
        self.by_id.insert(id.into(), handler);
        self
    }

    pub fn bind_kind(
        mut self,
        kind: BlockKind,
        factory: impl Fn(&BlockSpec) -> Result<Handler, GraphError> + Send + Sync + 'static,
    ) -> Self {
        self.by_kind.insert(kind, Box::new(factory));
        self
    }

    pub fn shutdown_switch(mut self, switch: Arc<ShutdownSwitch>) -> Self {
        self.shutdown = Some(switch);
        self
    }

    fn resolve(&mut self, spec: &BlockSpec) -> Result<Handler, GraphError> {
        if let Some(h) = self.by_id.remove(&spec.id) {
            return Ok(h);
        }
        if let Some(f) = self.by_kind.get(&spec.kind) {
            return f(spec);
        }
        Handler::from_config(spec)
    }
}

/// Parses a topology document, reporting syntax and shape errors with their
/// line and column.
pub fn parse_topology(doc: &str) -> Result<Topology, GraphError> {
    serde_json::from_str(doc).map_err(|e| GraphError::Schema {
        line: e.line(),
        column: e.column(),
        message: e.to_string(),
    })
}

pub fn import_topology(doc: &str, bindings: HandlerBindings) -> Result<PipelineGraph, GraphError> {
    build_topology(parse_topology(doc)?, bindings)
}

/// Equivalent to registering every block, connecting every edge and
/// validating.
pub fn build_topology(topo: Topology, mut bindings: HandlerBindings) -> Result<PipelineGraph, GraphError> {
    let mut builder = GraphBuilder::new();
    if let Some(s) = &topo.input_schema {
        builder = builder.input_schema(FeatureSchema::new(s.id.clone(), s.features.clone())?);
    }
    if let Some(c) = &topo.classes {
        builder = builder.classes(labels(c));
    }
    if let Some(sw) = bindings.shutdown.take() {
        builder = builder.shutdown_switch(sw);
    }
    for spec in topo.blocks {
        let handler = bindings.resolve(&spec)?;
        builder.register(spec, handler)?;
    }
    for [from, to] in &topo.edges {
        builder.connect(from, to)?;
    }
    builder.set_entry(&topo.entry)?;
    builder.set_exit(&topo.exit)?;
    builder.validate()
}

fn quote(s: &str) -> String {
    format!("\"{}\"", s.replace('\\', "\\\\").replace('"', "\\\""))
}

/// Graphviz rendering: one node per block labeled `id\nkind`, nodes in
/// topological order (ties by id), edges sorted the same way.
pub fn export_dot(graph: &PipelineGraph) -> String {
    let order = graph.topological_order();
    let rank: HashMap<&str, usize> = order.iter().enumerate().map(|(i, id)| (id.as_str(), i)).collect();
    let mut out = String::from("digraph pipeline {\n  rankdir=LR;\n");
    for id in &order {
        let kind = graph.spec(id).expect("ordered ids exist").kind;
        let _ = writeln!(out, "  {} [label=\"{}\\n{}\"];", quote(id), id, kind);
    }
    let mut edges: Vec<&(BlockId, BlockId)> = graph.edges().iter().collect();
    edges.sort_by_key(|(f, t)| (rank[f.as_str()], rank[t.as_str()]));
    for (f, t) in edges {
        let _ = writeln!(out, "  {} -> {};", quote(f), quote(t));
    }
    out.push_str("}\n");
    out
}
