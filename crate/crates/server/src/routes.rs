//! The route table: a fixed endpoint family per block kind plus the
//! pipeline-level endpoints, generated from a validated graph.

use std::fmt;

use glassflow_core::graph::{BlockId, BlockKind, PipelineGraph};
use glassflow_core::xai::Method;
use serde::{Deserialize, Serialize, Serializer};

pub const API_PREFIX: &str = "/api/v1";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum HttpMethod {
    Get,
    Post,
    Put,
    Delete,
}

impl HttpMethod {
    pub fn as_str(&self) -> &'static str {
        match self {
            HttpMethod::Get => "GET",
            HttpMethod::Post => "POST",
            HttpMethod::Put => "PUT",
            HttpMethod::Delete => "DELETE",
        }
    }

    pub fn parse(s: &str) -> Option<HttpMethod> {
        match s {
            "GET" => Some(HttpMethod::Get),
            "POST" => Some(HttpMethod::Post),
            "PUT" => Some(HttpMethod::Put),
            "DELETE" => Some(HttpMethod::Delete),
            _ => None,
        }
    }

    /// Whether arguments travel in a JSON body rather than the query string.
    pub fn has_body(&self) -> bool {
        matches!(self, HttpMethod::Post | HttpMethod::Put)
    }
}

impl<'de> Deserialize<'de> for HttpMethod {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        HttpMethod::parse(&s).ok_or_else(|| serde::de::Error::custom(format!("unknown HTTP method `{s}`")))
    }
}

impl fmt::Display for HttpMethod {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Operation {
    GetGraph,
    ExecutePipeline,
    WhatIfPipeline,
    ExplainPipeline(Method),
    ListTrace,
    GetTools,
    GetOpenApi,
    ControlStatus,
    TriggerShutdown,
    ClearShutdown,
    Chat,
    Predict,
    Explain(Method),
    Retrain,
    ListRules,
    CreateRule,
    UpdateRule,
    DeleteRule,
    GetOffsets,
    SetOffsets,
    GetPredicate,
    SetPredicate,
    GetStrategy,
    SetStrategy,
}

impl Operation {
    /// Operations served for every graph.
    pub fn pipeline_level() -> Vec<Operation> {
        let mut ops = vec![Operation::GetGraph, Operation::ExecutePipeline, Operation::WhatIfPipeline];
        ops.extend(Method::ALL.map(Operation::ExplainPipeline));
        ops.extend([
            Operation::ListTrace,
            Operation::GetTools,
            Operation::GetOpenApi,
            Operation::ControlStatus,
            Operation::TriggerShutdown,
            Operation::ClearShutdown,
            Operation::Chat,
        ]);
        ops
    }

    /// The endpoint family of a block kind.
    pub fn for_kind(kind: BlockKind) -> Vec<Operation> {
        match kind {
            BlockKind::Model => {
                let mut ops = vec![Operation::Predict];
                ops.extend(Method::ALL.map(Operation::Explain));
                ops.push(Operation::Retrain);
                ops
            }
            BlockKind::NonGoalFilter | BlockKind::DivineRuleGuard => vec![
                Operation::ListRules,
                Operation::CreateRule,
                Operation::UpdateRule,
                Operation::DeleteRule,
            ],
            BlockKind::BiasInjector => vec![Operation::GetOffsets, Operation::SetOffsets],
            BlockKind::LogicBomb => vec![Operation::GetPredicate, Operation::SetPredicate],
            BlockKind::Aggregator => vec![Operation::GetStrategy, Operation::SetStrategy],
            // The emergency stop is global; its endpoints are pipeline-level.
            BlockKind::ShutdownTrigger | BlockKind::Preprocessor | BlockKind::Splitter => Vec::new(),
        }
    }

    pub fn is_block_level(&self) -> bool {
        matches!(
            self,
            Operation::Predict
                | Operation::Explain(_)
                | Operation::Retrain
                | Operation::ListRules
                | Operation::CreateRule
                | Operation::UpdateRule
                | Operation::DeleteRule
                | Operation::GetOffsets
                | Operation::SetOffsets
                | Operation::GetPredicate
                | Operation::SetPredicate
                | Operation::GetStrategy
                | Operation::SetStrategy
        )
    }

    pub fn method(&self) -> HttpMethod {
        match self {
            Operation::GetGraph
            | Operation::ListTrace
            | Operation::GetTools
            | Operation::GetOpenApi
            | Operation::ControlStatus
            | Operation::ListRules
            | Operation::GetOffsets
            | Operation::GetPredicate
            | Operation::GetStrategy => HttpMethod::Get,
            Operation::UpdateRule | Operation::SetOffsets | Operation::SetPredicate | Operation::SetStrategy => {
                HttpMethod::Put
            }
            Operation::DeleteRule => HttpMethod::Delete,
            _ => HttpMethod::Post,
        }
    }

    /// Path template relative to the API prefix; `{id}` is the block id.
    pub fn template(&self) -> &'static str {
        match self {
            Operation::GetGraph => "/graph",
            Operation::ExecutePipeline => "/pipeline/execute",
            Operation::WhatIfPipeline => "/pipeline/whatif",
            Operation::ExplainPipeline(_) => "/pipeline/explain/{method}",
            Operation::ListTrace => "/trace",
            Operation::GetTools => "/tools",
            Operation::GetOpenApi => "/openapi",
            Operation::ControlStatus => "/control/status",
            Operation::TriggerShutdown => "/control/shutdown",
            Operation::ClearShutdown => "/control/clear",
            Operation::Chat => "/chat",
            Operation::Predict => "/blocks/{id}/predict",
            Operation::Explain(_) => "/blocks/{id}/explain/{method}",
            Operation::Retrain => "/blocks/{id}/retrain",
            Operation::ListRules | Operation::CreateRule => "/blocks/{id}/rules",
            Operation::UpdateRule | Operation::DeleteRule => "/blocks/{id}/rules/{rule_id}",
            Operation::GetOffsets | Operation::SetOffsets => "/blocks/{id}/offsets",
            Operation::GetPredicate | Operation::SetPredicate => "/blocks/{id}/predicate",
            Operation::GetStrategy | Operation::SetStrategy => "/blocks/{id}/strategy",
        }
    }

    /// Control writes; each successful call is audited exactly once.
    pub fn is_mutating(&self) -> bool {
        matches!(
            self,
            Operation::TriggerShutdown
                | Operation::ClearShutdown
                | Operation::Retrain
                | Operation::CreateRule
                | Operation::UpdateRule
                | Operation::DeleteRule
                | Operation::SetOffsets
                | Operation::SetPredicate
                | Operation::SetStrategy
        )
    }

    /// Stable snake_case name; block-level names omit the block id.
    pub fn name(&self) -> String {
        match self {
            Operation::GetGraph => "get_graph".into(),
            Operation::ExecutePipeline => "execute_pipeline".into(),
            Operation::WhatIfPipeline => "whatif_pipeline".into(),
            Operation::ExplainPipeline(m) => format!("explain_{}_pipeline", m.segment()),
            Operation::ListTrace => "list_trace".into(),
            Operation::GetTools => "get_tools".into(),
            Operation::GetOpenApi => "get_openapi".into(),
            Operation::ControlStatus => "get_control_status".into(),
            Operation::TriggerShutdown => "trigger_shutdown".into(),
            Operation::ClearShutdown => "clear_shutdown".into(),
            Operation::Chat => "chat".into(),
            Operation::Predict => "predict".into(),
            Operation::Explain(m) => format!("explain_{}", m.segment()),
            Operation::Retrain => "retrain".into(),
            Operation::ListRules => "list_rules".into(),
            Operation::CreateRule => "create_rule".into(),
            Operation::UpdateRule => "update_rule".into(),
            Operation::DeleteRule => "delete_rule".into(),
            Operation::GetOffsets => "get_offsets".into(),
            Operation::SetOffsets => "set_offsets".into(),
            Operation::GetPredicate => "get_predicate".into(),
            Operation::SetPredicate => "set_predicate".into(),
            Operation::GetStrategy => "get_strategy".into(),
            Operation::SetStrategy => "set_strategy".into(),
        }
    }

    /// Whether an agent may call it: the manifest, the schema and the chat
    /// endpoint itself are not tools.
    pub fn is_tool(&self) -> bool {
        !matches!(self, Operation::GetTools | Operation::GetOpenApi | Operation::Chat)
    }
}

fn serialize_operation<S: Serializer>(op: &Operation, s: S) -> Result<S::Ok, S::Error> {
    s.serialize_str(&op.name())
}

/// One concrete endpoint. `path` has the block id and method filled in;
/// `{rule_id}` stays a parameter.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize)]
pub struct RouteSpec {
    pub method: HttpMethod,
    pub path: String,
    #[serde(serialize_with = "serialize_operation")]
    pub operation: Operation,
    pub block_id: Option<BlockId>,
    pub kind: Option<BlockKind>,
}

impl RouteSpec {
    fn new(op: Operation, block: Option<(&BlockId, BlockKind)>) -> RouteSpec {
        let mut path = format!("{API_PREFIX}{}", op.template());
        if let Some((id, _)) = block {
            path = path.replace("{id}", id);
        }
        if let Operation::Explain(m) | Operation::ExplainPipeline(m) = op {
            path = path.replace("{method}", m.segment());
        }
        RouteSpec {
            method: op.method(),
            path,
            operation: op,
            block_id: block.map(|(id, _)| id.clone()),
            kind: block.map(|(_, k)| k),
        }
    }

    /// Names of the `{...}` placeholders left in the path.
    pub fn path_params(&self) -> Vec<&str> {
        self.path
            .split('/')
            .filter_map(|seg| seg.strip_prefix('{').and_then(|s| s.strip_suffix('}')))
            .collect()
    }

    /// Whether a concrete request path matches this route.
    pub fn matches(&self, method: HttpMethod, path: &str) -> bool {
        if method != self.method {
            return false;
        }
        let want: Vec<&str> = self.path.split('/').collect();
        let got: Vec<&str> = path.split('/').collect();
        want.len() == got.len()
            && want
                .iter()
                .zip(&got)
                .all(|(w, g)| (w.starts_with('{') && w.ends_with('}') && !g.is_empty()) || w == g)
    }
}

/// Pipeline-level routes first, then each block's family in topological
/// order. A pure function of the graph's structure.
pub fn generate_routes(graph: &PipelineGraph) -> Vec<RouteSpec> {
    let mut routes: Vec<RouteSpec> = Operation::pipeline_level()
        .into_iter()
        .map(|op| RouteSpec::new(op, None))
        .collect();
    for id in graph.topological_order() {
        let kind = graph.spec(id).expect("ids from the topological order are registered").kind;
        routes.extend(Operation::for_kind(kind).into_iter().map(|op| RouteSpec::new(op, Some((id, kind)))));
    }
    routes
}

/// The route a request resolves to, if any.
pub fn resolve<'a>(routes: &'a [RouteSpec], method: HttpMethod, path: &str) -> Option<&'a RouteSpec> {
    routes.iter().find(|r| r.matches(method, path))
}
