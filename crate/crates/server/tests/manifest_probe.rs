mod common;

use std::collections::HashSet;

use common::start;
use glassflow_server::agent::{HttpToolExecutor, ToolCall, ToolExecutor};
use glassflow_server::ToolDescriptor;
use serde_json::{json, Value};

fn manifest(v: &Value) -> Vec<ToolDescriptor> {
    serde_json::from_value(v.clone()).expect("manifest deserializes")
}

#[tokio::test]
async fn demo_manifest_shape() {
    let srv = start(false).await;
    let tools = manifest(&srv.get("/api/v1/tools").await.json);
    // Oracle: endpoint families per demo block (tree_1 and logreg_1: predict,
    // 3 explain, retrain; filter and guard_1: 4 rule operations; aggregator:
    // 2 strategy operations) plus 10 pipeline tools.
    assert_eq!(tools.len(), 2 * 5 + 2 * 4 + 2 + 10);
    assert!(tools.len() >= 12);
    let names: HashSet<&str> = tools.iter().map(|t| t.name.as_str()).collect();
    assert_eq!(names.len(), tools.len(), "names are unique");
    for t in &tools {
        assert!(!t.name.is_empty() && t.name.chars().all(|c| c.is_ascii_lowercase() || c.is_ascii_digit() || c == '_'));
        assert!(t.http.path.starts_with("/api/v1/"));
        if let Some(id) = &t.block_id {
            let spec = srv.pipeline.graph().spec(id).unwrap();
            assert!(t.description.contains(&spec.description), "{}", t.name);
        }
    }
}

#[tokio::test]
async fn parameter_documents_are_valid_schemas_and_examples_conform() {
    for extended in [false, true] {
        let srv = start(extended).await;
        for tool in manifest(&srv.get("/api/v1/tools").await.json) {
            jsonschema::meta::validate(&tool.parameters)
                .unwrap_or_else(|e| panic!("{}: parameters are not a valid schema: {e}", tool.name));
            let validator = jsonschema::validator_for(&tool.parameters).unwrap();
            let errors: Vec<String> = validator.iter_errors(&tool.example).map(|e| e.to_string()).collect();
            assert!(errors.is_empty(), "{}: example violates its schema: {errors:?}", tool.name);
            if tool.parameters["required"].as_array().is_some_and(|r| !r.is_empty()) {
                assert!(!validator.is_valid(&json!({})), "{}: empty arguments accepted", tool.name);
            }
        }
    }
}

/// Replays every tool's example, in manifest order, through the agent's
/// executor: each answers 2xx.
#[tokio::test]
async fn every_tool_example_executes() {
    for extended in [false, true] {
        let srv = start(extended).await;
        let tools = manifest(&srv.get("/api/v1/tools").await.json);
        let exec = HttpToolExecutor::new(&srv.base, None).unwrap();
        for (i, tool) in tools.iter().enumerate() {
            let call = ToolCall {
                tool_name: tool.name.clone(),
                arguments: tool.example.clone(),
                call_id: format!("probe_{i}"),
            };
            if let Err(e) = exec.execute(tool, &call).await {
                panic!("{} (extended={extended}) failed: {e}", tool.name);
            }
        }
    }
}
