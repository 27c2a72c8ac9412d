//! Registration, wiring and validation of pipeline graphs.

use std::collections::{BTreeSet, HashMap, VecDeque};
use std::sync::Arc;

use super::handler::Handler;
use super::{valid_block_id, BlockId, BlockKind, BlockSpec, GraphError};
use crate::control::expr::Scope;
use crate::control::{ShutdownSwitch, SplitMode};
use crate::payload::{FeatureSchema, Labels, PayloadKind};

/// A registered block: its spec and its behavior.
#[derive(Debug)]
pub struct Block {
    pub spec: BlockSpec,
    pub handler: Handler,
}

/// Returned by [`GraphBuilder::connect`].
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EdgeHandle {
    pub index: usize,
    pub from: BlockId,
    pub to: BlockId,
}

/// Draft graph under construction.
#[derive(Debug, Default)]
pub struct GraphBuilder {
    blocks: Vec<Block>,
    index: HashMap<BlockId, usize>,
    edges: Vec<(BlockId, BlockId)>,
    entry: Option<BlockId>,
    exit: Option<BlockId>,
    input_schema: Option<Arc<FeatureSchema>>,
    classes: Option<Labels>,
    shutdown: Option<Arc<ShutdownSwitch>>,
}

impl GraphBuilder {
    pub fn new() -> Self {
        Self::default()
    }

    /// Schema of the pipeline input; filter rules and guard conditions are
    /// validated against it.
    pub fn input_schema(mut self, schema: Arc<FeatureSchema>) -> Self {
        self.input_schema = Some(schema);
        self
    }

    /// Class labels of the pipeline's decisions.
    pub fn classes(mut self, classes: Labels) -> Self {
        self.classes = Some(classes);
        self
    }

    /// Shares an existing emergency-stop switch instead of creating one.
    pub fn shutdown_switch(mut self, switch: Arc<ShutdownSwitch>) -> Self {
        self.shutdown = Some(switch);
        self
    }

    pub fn register(&mut self, spec: BlockSpec, handler: Handler) -> Result<BlockId, GraphError> {
        if !valid_block_id(&spec.id) {
            return Err(GraphError::InvalidId(spec.id));
        }
        if self.index.contains_key(&spec.id) {
            return Err(GraphError::DuplicateId(spec.id));
        }
        handler.check_against(&spec)?;
        let id = spec.id.clone();
        self.index.insert(id.clone(), self.blocks.len());
        self.blocks.push(Block { spec, handler });
        Ok(id)
    }

    pub fn connect(&mut self, from: &str, to: &str) -> Result<EdgeHandle, GraphError> {
        let a = self.spec(from)?;
        let b = self.spec(to)?;
        if a.output_payload != b.input_payload {
            return Err(GraphError::PayloadMismatch {
                at: format!("edge {from} -> {to}"),
                expected: b.input_payload,
                found: a.output_payload,
            });
        }
        if self.edges.iter().any(|(f, t)| f == from && t == to) {
            return Err(GraphError::DuplicateEdge(from.into(), to.into()));
        }
        self.edges.push((from.into(), to.into()));
        Ok(EdgeHandle {
            index: self.edges.len() - 1,
            from: from.into(),
            to: to.into(),
        })
    }

    pub fn set_entry(&mut self, id: &str) -> Result<(), GraphError> {
        self.spec(id)?;
        self.entry = Some(id.into());
        Ok(())
    }

    pub fn set_exit(&mut self, id: &str) -> Result<(), GraphError> {
        self.spec(id)?;
        self.exit = Some(id.into());
        Ok(())
    }

    fn spec(&self, id: &str) -> Result<&BlockSpec, GraphError> {
        self.index
            .get(id)
            .map(|&i| &self.blocks[i].spec)
            .ok_or_else(|| GraphError::UnknownBlock(id.into()))
    }

    /// Checks every graph invariant and freezes the draft.
    pub fn validate(self) -> Result<PipelineGraph, GraphError> {
        if self.blocks.is_empty() {
            return Err(GraphError::EmptyGraph);
        }
        let entry = self.entry.clone().ok_or(GraphError::MissingEntry)?;
        let exit = self.exit.clone().ok_or(GraphError::MissingExit)?;
        let n = self.blocks.len();
        let mut inbound = vec![Vec::new(); n];
        let mut outbound = vec![Vec::new(); n];
        for (f, t) in &self.edges {
            let (fi, ti) = (self.index[f], self.index[t]);
            outbound[fi].push(ti);
            inbound[ti].push(fi);
        }
        let order = topological_order(&self.blocks, &inbound, &outbound)?;
        let entry_i = self.index[&entry];
        let exit_i = self.index[&exit];
        if !inbound[entry_i].is_empty() {
            return Err(GraphError::EntryHasInbound(entry));
        }
        if !outbound[exit_i].is_empty() {
            return Err(GraphError::ExitHasOutbound(exit));
        }
        let forward = reach(entry_i, &outbound);
        let backward = reach(exit_i, &inbound);
        let stranded: Vec<BlockId> = (0..n)
            .filter(|&i| !(forward[i] && backward[i]))
            .map(|i| self.blocks[i].spec.id.clone())
            .collect();
        if !stranded.is_empty() {
            return Err(GraphError::Unreachable(stranded));
        }
        let exit_spec = &self.blocks[exit_i].spec;
        if exit_spec.output_payload == PayloadKind::FeatureVector {
            return Err(GraphError::PayloadMismatch {
                at: format!("pipeline exit `{}`", exit_spec.id),
                expected: PayloadKind::Decision,
                found: PayloadKind::FeatureVector,
            });
        }
        for (i, block) in self.blocks.iter().enumerate() {
            let id = &block.spec.id;
            match block.spec.kind {
                BlockKind::Splitter if outbound[i].len() < 2 => {
                    return Err(GraphError::SplitterFanoutTooSmall(id.clone()))
                }
                BlockKind::Aggregator if inbound[i].len() < 2 => {
                    return Err(GraphError::AggregatorFaninTooSmall(id.clone()))
                }
                BlockKind::Aggregator => {}
                _ if inbound[i].len() > 1 => return Err(GraphError::AmbiguousFanIn(id.clone())),
                _ => {}
            }
        }
        let graph = PipelineGraph {
            blocks: self.blocks,
            index: self.index,
            edges: self.edges,
            entry,
            exit,
            order,
            inbound,
            outbound,
            input_schema: self.input_schema,
            classes: self.classes,
            shutdown: self.shutdown.unwrap_or_default(),
        };
        for block in &graph.blocks {
            graph.check_block_config(block)?;
        }
        Ok(graph)
    }
}

/// Kahn's algorithm; ties go to the lexicographically smallest id.
fn topological_order(
    blocks: &[Block],
    inbound: &[Vec<usize>],
    outbound: &[Vec<usize>],
) -> Result<Vec<usize>, GraphError> {
    let id = |i: usize| blocks[i].spec.id.as_str();
    let mut indegree: Vec<usize> = inbound.iter().map(Vec::len).collect();
    let mut ready: BTreeSet<(&str, usize)> = (0..blocks.len())
        .filter(|&i| indegree[i] == 0)
        .map(|i| (id(i), i))
        .collect();
    let mut order = Vec::with_capacity(blocks.len());
    while let Some(first) = ready.pop_first() {
        let i = first.1;
        order.push(i);
        for &j in &outbound[i] {
            indegree[j] -= 1;
            if indegree[j] == 0 {
                ready.insert((id(j), j));
            }
        }
    }
    if order.len() == blocks.len() {
        return Ok(order);
    }
    let remaining: Vec<bool> = indegree.iter().map(|&d| d > 0).collect();
    Err(GraphError::CycleDetected(find_cycle(blocks, outbound, &remaining)))
}

/// Walks successors inside the unsorted remainder until a node repeats.
/// Every remaining node has a remaining predecessor, so walking backwards
/// would also work; forward walking needs a node with a remaining successor,
/// which any node on a cycle has.
fn find_cycle(blocks: &[Block], outbound: &[Vec<usize>], remaining: &[bool]) -> Vec<BlockId> {
    let start = (0..blocks.len())
        .filter(|&i| remaining[i] && outbound[i].iter().any(|&j| remaining[j]))
        .min_by(|&a, &b| blocks[a].spec.id.cmp(&blocks[b].spec.id))
        .expect("a cycle exists among remaining nodes");
    let mut path = vec![start];
    let mut pos: HashMap<usize, usize> = HashMap::from([(start, 0)]);
    let mut cur = start;
    loop {
        let next = outbound[cur]
            .iter()
            .copied()
            .filter(|&j| remaining[j] && outbound[j].iter().any(|&k| remaining[k]))
            .min_by(|&a, &b| blocks[a].spec.id.cmp(&blocks[b].spec.id))
            .expect("cycle nodes have a successor on the cycle side");
        if let Some(&p) = pos.get(&next) {
            let mut cycle: Vec<BlockId> = path[p..].iter().map(|&i| blocks[i].spec.id.clone()).collect();
            cycle.push(blocks[next].spec.id.clone());
            return cycle;
        }
        pos.insert(next, path.len());
        path.push(next);
        cur = next;
    }
}

fn reach(start: usize, adjacency: &[Vec<usize>]) -> Vec<bool> {
    let mut seen = vec![false; adjacency.len()];
    let mut queue = VecDeque::from([start]);
    seen[start] = true;
    while let Some(i) = queue.pop_front() {
        for &j in &adjacency[i] {
            if !seen[j] {
                seen[j] = true;
                queue.push_back(j);
            }
        }
    }
    seen
}

/// A validated, structurally immutable pipeline. Block state (rules,
/// offsets, models, the shutdown flag) is mutable through copy-on-write cells.
#[derive(Debug)]
pub struct PipelineGraph {
    pub(crate) blocks: Vec<Block>,
    index: HashMap<BlockId, usize>,
    edges: Vec<(BlockId, BlockId)>,
    entry: BlockId,
    exit: BlockId,
    pub(crate) order: Vec<usize>,
    pub(crate) inbound: Vec<Vec<usize>>,
    pub(crate) outbound: Vec<Vec<usize>>,
    input_schema: Option<Arc<FeatureSchema>>,
    classes: Option<Labels>,
    shutdown: Arc<ShutdownSwitch>,
}

impl PipelineGraph {
    pub fn entry(&self) -> &BlockId {
        &self.entry
    }

    pub fn exit(&self) -> &BlockId {
        &self.exit
    }

    /// Edges in declaration order.
    pub fn edges(&self) -> &[(BlockId, BlockId)] {
        &self.edges
    }

    /// Specs in registration order.
    pub fn specs(&self) -> impl Iterator<Item = &BlockSpec> {
        self.blocks.iter().map(|b| &b.spec)
    }

    pub fn len(&self) -> usize {
        self.blocks.len()
    }

    pub fn is_empty(&self) -> bool {
        self.blocks.is_empty()
    }

    pub fn contains(&self, id: &str) -> bool {
        self.index.contains_key(id)
    }

    pub fn spec(&self, id: &str) -> Result<&BlockSpec, GraphError> {
        self.block(id).map(|b| &b.spec)
    }

    pub fn handler(&self, id: &str) -> Result<&Handler, GraphError> {
        self.block(id).map(|b| &b.handler)
    }

    pub(crate) fn block(&self, id: &str) -> Result<&Block, GraphError> {
        self.index
            .get(id)
            .map(|&i| &self.blocks[i])
            .ok_or_else(|| GraphError::UnknownBlock(id.into()))
    }

    pub(crate) fn position(&self, id: &str) -> Option<usize> {
        self.index.get(id).copied()
    }

    /// Block ids in execution order (topological, ties by id).
    pub fn topological_order(&self) -> Vec<&BlockId> {
        self.order.iter().map(|&i| &self.blocks[i].spec.id).collect()
    }

    /// Ids of upstream neighbours, in edge declaration order.
    pub fn inbound(&self, id: &str) -> Result<Vec<&BlockId>, GraphError> {
        let i = self.position(id).ok_or_else(|| GraphError::UnknownBlock(id.into()))?;
        Ok(self.inbound[i].iter().map(|&j| &self.blocks[j].spec.id).collect())
    }

    pub fn outbound(&self, id: &str) -> Result<Vec<&BlockId>, GraphError> {
        let i = self.position(id).ok_or_else(|| GraphError::UnknownBlock(id.into()))?;
        Ok(self.outbound[i].iter().map(|&j| &self.blocks[j].spec.id).collect())
    }

    /// Ids of blocks of one kind, in registration order.
    pub fn blocks_of_kind(&self, kind: BlockKind) -> Vec<&BlockId> {
        self.specs().filter(|s| s.kind == kind).map(|s| &s.id).collect()
    }

    pub fn input_schema(&self) -> Option<&Arc<FeatureSchema>> {
        self.input_schema.as_ref()
    }

    pub fn classes(&self) -> Option<&Labels> {
        self.classes.as_ref()
    }

    pub fn shutdown(&self) -> &Arc<ShutdownSwitch> {
        &self.shutdown
    }

    /// Validation scope for rule conditions: input features plus, when
    /// known, the class labels a decision may carry.
    pub(crate) fn scope(&self) -> Option<Scope<'_>> {
        self.input_schema.as_deref().map(|features| Scope {
            features,
            decision_labels: self.classes.as_ref(),
        })
    }

    /// Checks live block configuration against the graph's schema, classes
    /// and wiring.
    pub(crate) fn check_block_config(&self, block: &Block) -> Result<(), GraphError> {
        let invalid = |message: String| GraphError::InvalidConfig {
            block: block.spec.id.clone(),
            message,
        };
        match &block.handler {
            Handler::NonGoalFilter(rules) => {
                let rules = rules.snapshot();
                check_unique_ids(rules.iter().map(|r| r.id.as_str())).map_err(invalid)?;
                if let Some(schema) = &self.input_schema {
                    for r in rules.iter() {
                        r.validate(schema)?;
                    }
                }
            }
            Handler::DivineRuleGuard(rules) => {
                if let (Some(schema), Some(classes)) = (&self.input_schema, &self.classes) {
                    for r in rules.snapshot().rules() {
                        r.validate(schema, classes)?;
                    }
                }
            }
            Handler::BiasInjector(cfg) => {
                if let Some(classes) = &self.classes {
                    cfg.snapshot().validate(classes)?;
                }
            }
            Handler::LogicBomb(pred) => {
                if let Some(scope) = self.scope() {
                    pred.snapshot().condition.validate(scope)?;
                }
            }
            Handler::Aggregator(strategy) => {
                let i = self.index[&block.spec.id];
                strategy.snapshot().validate(Some(self.inbound[i].len()))?;
            }
            Handler::Splitter(mode) => {
                mode.validate()?;
                if let SplitMode::ColumnPartition { partitions } = mode {
                    let i = self.index[&block.spec.id];
                    for &c in &self.outbound[i] {
                        let child = &self.blocks[c].spec.id;
                        if !partitions.contains_key(child) {
                            return Err(invalid(format!("no partition for child `{child}`")));
                        }
                    }
                    if let Some(schema) = &self.input_schema {
                        for name in partitions.values().flatten() {
                            if schema.index_of(name).is_none() {
                                return Err(invalid(format!("unknown feature `{name}`")));
                            }
                        }
                    }
                }
            }
            Handler::Custom(_) | Handler::Model(_) | Handler::ShutdownTrigger => {}
        }
        Ok(())
    }
}

pub(crate) fn check_unique_ids<'a>(ids: impl Iterator<Item = &'a str>) -> Result<(), String> {
    let mut seen = BTreeSet::new();
    for id in ids {
        if id.is_empty() {
            return Err("rule id must not be empty".into());
        }
        if !seen.insert(id) {
            return Err(format!("rule id `{id}` is used twice"));
        }
    }
    Ok(())
}
