//! Route documentation and the LLM tool manifest.
//!
//! Each route gets a [`RouteDoc`]: its parameters split by location (path,
//! query, JSON body), as JSON-Schema fragments, plus a minimal valid example.
//! The tool manifest and the OpenAPI document are both rendered from these,
//! so the agent and the human console read the same description.

use std::collections::HashSet;

use glassflow_core::graph::{BlockId, BlockKind, PipelineGraph};
use glassflow_core::models::Predictor;
use glassflow_core::xai::Method;
use serde::{Deserialize, Serialize};
use serde_json::{json, Map, Value};

use crate::routes::{generate_routes, HttpMethod, Operation, RouteSpec};

/// The rule id the manifest examples create, update and delete.
pub const EXAMPLE_RULE_ID: &str = "example_rule";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HttpBinding {
    pub method: HttpMethod,
    pub path: String,
}

/// Machine-readable description of one API operation for LLM tool use.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ToolDescriptor {
    pub name: String,
    pub description: String,
    /// JSON Schema of the argument object. Path placeholders, query
    /// parameters and body fields all appear as top-level properties.
    pub parameters: Value,
    pub http: HttpBinding,
    pub block_id: Option<BlockId>,
    /// Minimal valid arguments.
    pub example: Value,
}

impl ToolDescriptor {
    /// Names of the `{...}` placeholders in the path.
    pub fn path_params(&self) -> Vec<&str> {
        self.http
            .path
            .split('/')
            .filter_map(|seg| seg.strip_prefix('{').and_then(|s| s.strip_suffix('}')))
            .collect()
    }
}

/// A route with its parameters documented by location.
#[derive(Debug, Clone, PartialEq)]
pub struct RouteDoc {
    pub route: RouteSpec,
    /// Unique `[a-z0-9_]+` name; `None` for routes that are not tools.
    pub tool_name: Option<String>,
    pub summary: String,
    pub description: String,
    pub path_params: Vec<Param>,
    pub query_params: Vec<Param>,
    /// Schema of the JSON body object, for POST and PUT.
    pub body: Option<Value>,
    pub example: Value,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Param {
    pub name: String,
    pub schema: Value,
    pub required: bool,
}

impl RouteDoc {
    /// Argument schema for tool use: every parameter as a property.
    pub fn argument_schema(&self) -> Value {
        let mut properties = Map::new();
        let mut required = Vec::new();
        for p in self.path_params.iter().chain(&self.query_params) {
            properties.insert(p.name.clone(), p.schema.clone());
            if p.required {
                required.push(Value::String(p.name.clone()));
            }
        }
        if let Some(body) = &self.body {
            if let Some(props) = body.get("properties").and_then(Value::as_object) {
                for (k, v) in props {
                    properties.insert(k.clone(), v.clone());
                }
            }
            if let Some(req) = body.get("required").and_then(Value::as_array) {
                required.extend(req.iter().cloned());
            }
        }
        json!({
            "type": "object",
            "properties": properties,
            "required": required,
            "additionalProperties": false,
        })
    }
}

/// Lowercases and maps `-` to `_`, so any valid block id fits `[a-z0-9_]+`.
pub fn tool_token(id: &str) -> String {
    id.chars()
        .map(|c| if c == '-' { '_' } else { c.to_ascii_lowercase() })
        .collect()
}

fn base_tool_name(route: &RouteSpec) -> Option<String> {
    if !route.operation.is_tool() {
        return None;
    }
    Some(match &route.block_id {
        Some(id) => format!("{}_{}", route.operation.name(), tool_token(id)),
        None => route.operation.name(),
    })
}

/// Everything the schemas and examples need from the live graph.
struct Context<'g> {
    graph: &'g PipelineGraph,
    input_features: Vec<String>,
    classes: Vec<String>,
    pipeline_example: Value,
}

impl<'g> Context<'g> {
    fn new(graph: &'g PipelineGraph) -> Self {
        let input_features: Vec<String> = graph.input_schema().map(|s| s.names.clone()).unwrap_or_default();
        let classes: Vec<String> = match graph.classes() {
            Some(c) => c.to_vec(),
            None => graph
                .blocks_of_kind(BlockKind::Model)
                .into_iter()
                .find_map(|id| graph.model_state(id).ok().map(|s| s.classes().to_vec()))
                .unwrap_or_default(),
        };
        let mut pipeline_example = zero_features(&input_features);
        for id in graph.blocks_of_kind(BlockKind::Model) {
            let Ok(state) = graph.model_state(id) else { continue };
            let Some(row) = state.training.as_deref().and_then(|d| d.rows().first()) else { continue };
            if row.names() == input_features.as_slice() {
                pipeline_example = features_value(row.iter());
                break;
            }
        }
        Context {
            graph,
            input_features,
            classes,
            pipeline_example,
        }
    }

    fn model_features(&self, id: &str) -> (Vec<String>, Value) {
        match self.graph.model_state(id) {
            Ok(state) => {
                let names = state.feature_schema().names.clone();
                let example = match state.training.as_deref().and_then(|d| d.rows().first()) {
                    Some(row) => features_value(row.iter()),
                    None => zero_features(&names),
                };
                (names, example)
            }
            Err(_) => (self.input_features.clone(), self.pipeline_example.clone()),
        }
    }

    fn class_schema(&self) -> Value {
        if self.classes.is_empty() {
            json!({"type": "string"})
        } else {
            json!({"type": "string", "enum": self.classes})
        }
    }
}

fn features_value<'a>(pairs: impl Iterator<Item = (&'a str, f64)>) -> Value {
    Value::Object(pairs.map(|(n, v)| (n.to_string(), json!(v))).collect())
}

fn zero_features(names: &[String]) -> Value {
    Value::Object(names.iter().map(|n| (n.clone(), json!(0.0))).collect())
}

fn object(properties: Value, required: &[&str]) -> Value {
    json!({
        "type": "object",
        "properties": properties,
        "required": required,
        "additionalProperties": false,
    })
}

fn features_schema(names: &[String]) -> Value {
    let properties: Map<String, Value> = names.iter().map(|n| (n.clone(), json!({"type": "number"}))).collect();
    json!({
        "type": "object",
        "description": "Feature values by name; every feature is required.",
        "properties": properties,
        "required": names,
        "additionalProperties": false,
    })
}

fn comparison_schema() -> Value {
    json!({
        "type": "object",
        "description": "Compares one input feature, or `decision.label` / `decision.score` where a decision exists.",
        "properties": {
            "field": {"type": "string"},
            "op": {"type": "string", "enum": ["lt", "le", "eq", "ge", "gt", "in_range", "in_set"]},
            "value": {"type": ["number", "string"]},
            "min": {"type": "number"},
            "max": {"type": "number"},
            "values": {"type": "array", "items": {"type": ["number", "string"]}}
        },
        "required": ["field", "op"]
    })
}

fn condition_schema() -> Value {
    let cmp = comparison_schema();
    json!({
        "description": "One comparison, or {\"all\": [...]} whose items are comparisons or {\"any\": [comparisons]} groups.",
        "anyOf": [
            cmp,
            {
                "type": "object",
                "properties": {
                    "all": {
                        "type": "array",
                        "items": {"anyOf": [
                            cmp,
                            {"type": "object", "properties": {"any": {"type": "array", "items": cmp}}, "required": ["any"]}
                        ]}
                    }
                },
                "required": ["all"]
            }
        ]
    })
}

fn rule_schema(kind: BlockKind, ctx: &Context<'_>, with_id: bool) -> Value {
    let mut required: Vec<&str> = Vec::new();
    let mut props = Map::new();
    if with_id {
        props.insert("id".into(), json!({"type": "string", "description": "Unique rule id."}));
        required.push("id");
    }
    match kind {
        BlockKind::NonGoalFilter => {
            props.insert(
                "predicate".into(),
                json!({"description": "The allowed region; inputs outside it are rejected.", "allOf": [condition_schema()]}),
            );
            props.insert("reject_message".into(), json!({"type": "string"}));
            required.extend(["predicate", "reject_message"]);
        }
        _ => {
            props.insert(
                "priority".into(),
                json!({"type": "integer", "description": "Unique; lower numbers are tried first."}),
            );
            props.insert("condition".into(), condition_schema());
            props.insert(
                "replacement".into(),
                object(
                    json!({"label": ctx.class_schema(), "score": {"type": "number", "minimum": 0, "maximum": 1}}),
                    &["label", "score"],
                ),
            );
            props.insert("rationale".into(), json!({"type": "string"}));
            required.extend(["priority", "condition", "replacement"]);
        }
    }
    object(Value::Object(props), &required)
}

fn example_rule(kind: BlockKind, ctx: &Context<'_>, id: &str) -> Value {
    let field = ctx.input_features.first().cloned().unwrap_or_else(|| "x".into());
    match kind {
        BlockKind::NonGoalFilter => json!({
            "predicate": {"field": field, "op": "in_range", "min": -1e12, "max": 1e12},
            "reject_message": format!("{field} is not a plausible value"),
        }),
        _ => {
            let next_priority = ctx
                .graph
                .guard_rules(id)
                .ok()
                .and_then(|set| set.rules().iter().map(|r| r.priority).max())
                .map_or(100, |p| p + 1);
            json!({
                "priority": next_priority,
                "condition": {"field": field, "op": "gt", "value": 1e12},
                "replacement": {"label": ctx.classes.first().cloned().unwrap_or_default(), "score": 1.0},
                "rationale": "example rule that never fires",
            })
        }
    }
}

fn with(mut base: Value, extra: Value) -> Value {
    if let (Some(b), Value::Object(e)) = (base.as_object_mut(), extra) {
        b.extend(e);
    }
    base
}

fn explain_body(method: Method, names: &[String], ctx: &Context<'_>) -> Value {
    let mut props = json!({
        "features": features_schema(names),
        "seed": {"type": "integer", "minimum": 0, "default": 0, "description": "RNG seed; fixes background sampling and perturbations."},
        "background_size": {"type": "integer", "minimum": 1, "default": 100, "description": "Background rows sampled from the training data."},
        "target_class": with(ctx.class_schema(), json!({"description": "Class whose probability is explained; the predicted class by default."})),
    });
    match method {
        Method::ExactShapley => {}
        Method::KernelShap => {
            props = with(
                props,
                json!({
                    "n_samples": {"type": "integer", "minimum": 1, "description": "Coalitions to sample; min(2^d, 2048) by default."},
                    "exhaustive": {"type": "boolean", "default": false, "description": "Enumerate every coalition (exact)."},
                }),
            );
        }
        Method::Lime => {
            props = with(
                props,
                json!({
                    "n_samples": {"type": "integer", "minimum": 2, "default": 1000, "description": "Perturbations including the instance; at least 2·d."},
                    "kernel_width": {"type": "number", "exclusiveMinimum": 0, "description": "Proximity kernel width; 0.75·sqrt(d) by default."},
                    "ridge_lambda": {"type": "number", "minimum": 0, "default": 0.001},
                }),
            );
        }
    }
    object(props, &["features"])
}

fn explain_example(method: Method, features: Value) -> Value {
    match method {
        Method::ExactShapley => json!({"features": features, "seed": 0, "background_size": 20}),
        Method::KernelShap => json!({"features": features, "seed": 0, "n_samples": 200, "background_size": 20}),
        Method::Lime => json!({"features": features, "seed": 0, "n_samples": 500, "background_size": 20}),
    }
}

fn path_param(name: &str, description: &str) -> Param {
    Param {
        name: name.into(),
        schema: json!({"type": "string", "description": description}),
        required: true,
    }
}

fn document(route: RouteSpec, ctx: &Context<'_>) -> RouteDoc {
    let op = route.operation;
    let spec = route.block_id.as_deref().and_then(|id| ctx.graph.spec(id).ok());
    let who = spec
        .map(|s| {
            let about = if s.description.is_empty() { String::new() } else { format!(" {}", s.description) };
            format!("`{}` ({}, {}).{about}", s.id, s.display_name, s.kind)
        })
        .unwrap_or_default();
    let block_id = route.block_id.clone().unwrap_or_default();
    let kind = route.kind.unwrap_or(BlockKind::Model);
    let mut path_params = Vec::new();
    let mut query_params = Vec::new();
    let empty = || object(json!({}), &[]);
    let (summary, description, body, example): (&str, String, Option<Value>, Value) = match op {
        Operation::GetGraph => (
            "Pipeline topology",
            "Returns the pipeline topology (blocks with their live configs, edges, entry, exit, schema).".into(),
            None,
            json!({}),
        ),
        Operation::ExecutePipeline => (
            "Run one instance through the pipeline",
            "Runs one instance through the whole pipeline and records its trace. Rejected and halted runs are normal results with a status, reason and trace_ref.".into(),
            Some(object(json!({"features": features_schema(&ctx.input_features)}), &["features"])),
            json!({"features": ctx.pipeline_example}),
        ),
        Operation::WhatIfPipeline => (
            "What-if dry run",
            "Re-runs an instance with some feature values replaced, as a dry run: the trace is kept with a dry_run flag and control side effects are disabled.".into(),
            Some(object(
                json!({
                    "features": features_schema(&ctx.input_features),
                    "overrides": {"type": "object", "additionalProperties": {"type": "number"}, "description": "Feature values to replace."}
                }),
                &["features"],
            )),
            json!({
                "features": ctx.pipeline_example,
                "overrides": ctx.input_features.first().map(|f| json!({f.clone(): ctx.pipeline_example[f].clone()})).unwrap_or(json!({})),
            }),
        ),
        Operation::ExplainPipeline(m) => (
            "Explain the pipeline's released decision",
            format!(
                "Feature attributions ({}) for the whole pipeline's released decision; rejected or halted variants score 0.",
                explain_label(m)
            ),
            Some(explain_body(m, &ctx.input_features, ctx)),
            explain_example(m, ctx.pipeline_example.clone()),
        ),
        Operation::ListTrace => {
            query_params.push(Param {
                name: "run_id".into(),
                schema: json!({"type": "string", "description": "A run id (trace_ref), or `audit` for the control audit stream. Omit to list stored runs."}),
                required: false,
            });
            (
                "Audit traces",
                "Lists stored runs, or returns the events of one run or of the audit stream.".into(),
                None,
                json!({}),
            )
        }
        Operation::GetTools => ("Tool manifest", "Returns this tool manifest.".into(), None, json!({})),
        Operation::GetOpenApi => ("API description", "Returns the OpenAPI description of every route.".into(), None, json!({})),
        Operation::ControlStatus => (
            "Emergency stop status",
            "Reports whether the global emergency stop is active, with reason and author.".into(),
            None,
            json!({}),
        ),
        Operation::TriggerShutdown => (
            "Trigger the emergency stop",
            "Activates the global emergency stop: every later run halts before any block executes, until cleared.".into(),
            Some(object(json!({"reason": {"type": "string"}}), &[])),
            json!({"reason": "operator drill"}),
        ),
        Operation::ClearShutdown => (
            "Clear the emergency stop",
            "Deactivates the global emergency stop.".into(),
            Some(empty()),
            json!({}),
        ),
        Operation::Chat => (
            "Talk to the agent",
            "Sends a message to the tool-calling agent and returns the conversation.".into(),
            Some(object(
                json!({"message": {"type": "string"}, "conversation_id": {"type": "string"}}),
                &["message"],
            )),
            json!({"message": "What does the pipeline look like?"}),
        ),
        Operation::Predict => {
            let (names, features) = ctx.model_features(&block_id);
            (
                "Class probabilities",
                format!("Class probabilities from model {who}"),
                Some(object(json!({"features": features_schema(&names)}), &["features"])),
                json!({"features": features}),
            )
        }
        Operation::Explain(m) => {
            let (names, features) = ctx.model_features(&block_id);
            (
                "Feature attributions",
                format!("Feature attributions ({}) for a prediction of model {who}", explain_label(m)),
                Some(explain_body(m, &names, ctx)),
                explain_example(m, features),
            )
        }
        Operation::Retrain => (
            "Retrain with relabels",
            format!("Relabels training rows and refits model {who} Returns accuracy before and after and the rows whose prediction changed."),
            Some(object(
                json!({"relabels": {"type": "array", "items": object(
                    json!({
                        "row_index": {"type": "integer", "minimum": 0},
                        "new_label": ctx.class_schema(),
                        "author": {"type": "string"}
                    }),
                    &["row_index", "new_label"],
                )}}),
                &["relabels"],
            )),
            json!({"relabels": []}),
        ),
        Operation::ListRules => (
            "List rules",
            format!("Lists the rules of {who}"),
            None,
            json!({}),
        ),
        Operation::CreateRule => (
            "Add a rule",
            format!("Adds a rule to {who}"),
            Some(rule_schema(kind, ctx, true)),
            with(json!({"id": EXAMPLE_RULE_ID}), example_rule(kind, ctx, &block_id)),
        ),
        Operation::UpdateRule => {
            path_params.push(path_param("rule_id", "Id of the rule to replace."));
            (
                "Replace a rule",
                format!("Replaces one rule of {who}"),
                Some(rule_schema(kind, ctx, false)),
                with(json!({"rule_id": EXAMPLE_RULE_ID}), example_rule(kind, ctx, &block_id)),
            )
        }
        Operation::DeleteRule => {
            path_params.push(path_param("rule_id", "Id of the rule to remove."));
            (
                "Remove a rule",
                format!("Removes one rule of {who}"),
                None,
                json!({"rule_id": EXAMPLE_RULE_ID}),
            )
        }
        Operation::GetOffsets => ("Bias offsets", format!("Returns the bias configuration of {who}"), None, json!({})),
        Operation::SetOffsets => (
            "Set bias offsets",
            format!("Replaces the bias configuration of {who} Offsets are added to log-probabilities, then renormalised."),
            Some(object(
                json!({
                    "offsets": {"type": "object", "additionalProperties": {"type": "number"}, "propertyNames": ctx.class_schema()},
                    "active": {"type": "boolean"},
                    "rationale": {"type": "string"}
                }),
                &[],
            )),
            ctx.graph
                .bias_config(&block_id)
                .map(|c| serde_json::to_value(&*c).unwrap_or_default())
                .unwrap_or(json!({})),
        ),
        Operation::GetPredicate => (
            "Fail-safe predicate",
            format!("Returns the boundary predicate of {who}"),
            None,
            json!({}),
        ),
        Operation::SetPredicate => (
            "Set the fail-safe predicate",
            format!("Replaces the boundary predicate of {who} When it holds, state is reset and the run halts."),
            Some(object(
                json!({
                    "condition": condition_schema(),
                    "action": {"type": "string", "enum": ["reset_and_halt"]},
                    "description": {"type": "string"}
                }),
                &["condition"],
            )),
            ctx.graph
                .boundary(&block_id)
                .map(|p| serde_json::to_value(&*p).unwrap_or_default())
                .unwrap_or(json!({})),
        ),
        Operation::GetStrategy => (
            "Aggregation strategy",
            format!("Returns the aggregation strategy of {who}"),
            None,
            json!({}),
        ),
        Operation::SetStrategy => (
            "Set the aggregation strategy",
            format!("Replaces the aggregation strategy of {who}"),
            Some(object(
                json!({
                    "strategy": {"type": "string", "enum": ["majority_vote", "mean_probability", "weighted_mean"]},
                    "weights": {"type": "array", "items": {"type": "number", "minimum": 0}, "description": "One per inbound branch; weighted_mean only."}
                }),
                &["strategy"],
            )),
            ctx.graph
                .strategy(&block_id)
                .map(|s| serde_json::to_value(&*s).unwrap_or_default())
                .unwrap_or(json!({})),
        ),
    };
    RouteDoc {
        tool_name: base_tool_name(&route),
        route,
        summary: summary.to_string(),
        description,
        path_params,
        query_params,
        body,
        example,
    }
}

fn explain_label(m: Method) -> &'static str {
    match m {
        Method::ExactShapley => "exact Shapley values",
        Method::KernelShap => "KernelSHAP",
        Method::Lime => "LIME",
    }
}

/// Documents every route of the graph, with tool names made unique.
pub fn document_routes(graph: &PipelineGraph) -> Vec<RouteDoc> {
    let ctx = Context::new(graph);
    let mut docs: Vec<RouteDoc> = generate_routes(graph).into_iter().map(|r| document(r, &ctx)).collect();
    // Distinct block ids can map to one token (`a-b`, `a_b`); suffix repeats.
    let mut seen = HashSet::new();
    for doc in &mut docs {
        if let Some(name) = &doc.tool_name {
            let mut candidate = name.clone();
            let mut n = 2;
            while !seen.insert(candidate.clone()) {
                candidate = format!("{name}_{n}");
                n += 1;
            }
            doc.tool_name = Some(candidate);
        }
    }
    docs
}

pub fn tool_descriptor(doc: &RouteDoc) -> Option<ToolDescriptor> {
    let name = doc.tool_name.clone()?;
    Some(ToolDescriptor {
        name,
        description: doc.description.clone(),
        parameters: doc.argument_schema(),
        http: HttpBinding {
            method: doc.route.method,
            path: doc.route.path.clone(),
        },
        block_id: doc.route.block_id.clone(),
        example: doc.example.clone(),
    })
}

/// One descriptor per externally useful route.
pub fn generate_tool_manifest(graph: &PipelineGraph) -> Vec<ToolDescriptor> {
    document_routes(graph).iter().filter_map(tool_descriptor).collect()
}
