mod common;

use std::collections::HashSet;

use common::start;
use glassflow_server::agent::{HttpToolExecutor, ToolCall, ToolExecutor};
use glassflow_server::routes::HttpMethod;
use glassflow_server::ToolDescriptor;
use proptest::prelude::*;
use serde_json::{json, Value};

fn manifest(v: &Value) -> Vec<ToolDescriptor> {
    serde_json::from_value(v.clone()).unwrap()
}

fn fill_path(tool: &ToolDescriptor) -> String {
    let mut path = tool.http.path.clone();
    for p in tool.path_params() {
        let v = tool.example[p].as_str().unwrap().to_string();
        path = path.replace(&format!("{{{p}}}"), &v);
    }
    path
}

fn body_of(tool: &ToolDescriptor) -> Value {
    let mut body = tool.example.clone();
    for p in tool.path_params() {
        body.as_object_mut().unwrap().remove(p);
    }
    body
}

/// Operator requests: each 2xx write adds exactly one audit event; reads
/// add none.
#[tokio::test]
async fn each_operator_write_is_audited_once() {
    for extended in [false, true] {
        let srv = start(extended).await;
        let tools = manifest(&srv.get("/api/v1/tools").await.json);
        for tool in &tools {
            let before = srv.audit().len();
            let path = fill_path(tool);
            let r = if tool.http.method.has_body() {
                srv.send(tool.http.method.as_str(), &path, Some(&body_of(tool))).await
            } else {
                srv.send(tool.http.method.as_str(), &path, None).await
            };
            assert!((200..300).contains(&r.status), "{}: {}", tool.name, r.text);
            let added = srv.audit().len() - before;
            let mutating = tool.name.starts_with("create_rule")
                || tool.name.starts_with("update_rule")
                || tool.name.starts_with("delete_rule")
                || tool.name.starts_with("set_")
                || tool.name.starts_with("retrain")
                || tool.name == "trigger_shutdown"
                || tool.name == "clear_shutdown";
            assert_eq!(added, usize::from(mutating), "{}", tool.name);
            if mutating {
                let ev = srv.audit().pop().unwrap();
                assert_eq!(ev.payload_snapshot["actor"], "operator");
                assert_eq!(ev.payload_snapshot["author"], "operator");
            }
        }
    }
}

#[tokio::test]
async fn failed_writes_leave_no_audit_event() {
    let srv = start(false).await;
    let before = srv.audit().len();
    let dup = json!({"id": "very_high_cholesterol", "priority": 99, "condition": {"field": "age", "op": "gt", "value": 1},
                     "replacement": {"label": "disease", "score": 1.0}});
    assert_eq!(srv.post("/api/v1/blocks/guard_1/rules", &dup).await.status, 409);
    assert_eq!(srv.send("DELETE", "/api/v1/blocks/guard_1/rules/nope", None).await.status, 404);
    let bad = srv
        .send("PUT", "/api/v1/blocks/aggregator/strategy", Some(&json!({"strategy": "weighted_mean", "weights": [1.0]})))
        .await;
    assert_eq!(bad.status, 422, "{}", bad.text);
    let relabel = srv
        .post("/api/v1/blocks/tree_1/retrain", &json!({"relabels": [{"row_index": 99999, "new_label": "disease"}]}))
        .await;
    assert_eq!(relabel.status, 422, "{}", relabel.text);
    assert_eq!(srv.audit().len(), before);
}

#[tokio::test]
async fn author_header_is_recorded() {
    let srv = start(false).await;
    let r = srv
        .client
        .post(srv.url("/api/v1/control/shutdown"))
        .header("x-glassflow-author", "alice")
        .json(&json!({"reason": "drill"}))
        .send()
        .await
        .unwrap();
    assert_eq!(r.status(), 200);
    let ev = srv.audit().pop().unwrap();
    assert_eq!(ev.payload_snapshot["action"], "trigger_shutdown");
    assert_eq!(ev.payload_snapshot["author"], "alice");
    let status = srv.get("/api/v1/control/status").await;
    assert_eq!(status.json["active"], true);
    assert_eq!(status.json["author"], "alice");
}

/// Agent calls, successful or not, each land in the audit stream once,
/// tagged with the tool and call id.
#[tokio::test]
async fn each_agent_call_is_audited_once() {
    let srv = start(false).await;
    let tools = manifest(&srv.get("/api/v1/tools").await.json);
    let exec = HttpToolExecutor::new(&srv.base, None).unwrap();
    for (i, tool) in tools.iter().enumerate() {
        for (j, args) in [tool.example.clone(), json!({"bogus": true})].into_iter().enumerate() {
            let before = srv.audit().len();
            let call = ToolCall {
                tool_name: tool.name.clone(),
                arguments: args,
                call_id: format!("c{i}_{j}"),
            };
            let reached = exec.build_request(tool, &call.arguments).is_ok();
            let outcome = exec.execute(tool, &call).await;
            let events = srv.audit();
            if !reached {
                // Arguments that cannot form a request never reach the API.
                assert_eq!(outcome.unwrap_err()["code"], "invalid_arguments");
                assert_eq!(events.len(), before, "{}", tool.name);
                continue;
            }
            assert_eq!(events.len() - before, 1, "{} args#{j}: {outcome:?}", tool.name);
            let ev = events.last().unwrap();
            assert_eq!(ev.payload_snapshot["actor"], "agent");
            assert_eq!(ev.payload_snapshot["tool"], tool.name.as_str());
            assert_eq!(ev.payload_snapshot["call_id"], call.call_id.as_str());
            assert_eq!(ev.block_id, tool.block_id);
        }
    }
}

#[tokio::test]
async fn forged_tool_headers_are_refused() {
    let srv = start(false).await;
    let before = srv.audit().len();
    for (tool, method, path) in [
        ("drop_database", "GET", "/api/v1/graph"),
        ("predict_tree_1", "POST", "/api/v1/blocks/logreg_1/predict"),
        ("get_graph", "POST", "/api/v1/control/shutdown"),
    ] {
        let r = srv
            .client
            .request(reqwest::Method::from_bytes(method.as_bytes()).unwrap(), srv.url(path))
            .header("x-glassflow-tool", tool)
            .header("x-glassflow-call-id", "x")
            .json(&json!({}))
            .send()
            .await
            .unwrap();
        let r = common::reply(r).await;
        assert_eq!((r.status, r.json["code"].as_str()), (400, Some("invalid_request")), "{tool}");
    }
    assert_eq!(srv.audit().len(), before);
    assert_eq!(srv.get("/api/v1/control/status").await.json["active"], false);
}

fn mutate_args(example: &Value, choice: u8) -> Value {
    match choice % 4 {
        0 => example.clone(),
        1 => json!({}),
        2 => json!({"unexpected": 1}),
        _ => {
            let mut v = example.clone();
            if let Some(f) = v.get_mut("features").and_then(Value::as_object_mut) {
                if let Some(first) = f.keys().next().cloned() {
                    f.remove(&first);
                }
            }
            v
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    /// No side channel: every agent-originated audit event names a manifest
    /// tool bound to the endpoint it reached, one event per call.
    #[test]
    fn agent_audit_events_map_to_manifest_tools(calls in prop::collection::vec((0usize..64, any::<u8>()), 1..12)) {
        let rt = tokio::runtime::Runtime::new().unwrap();
        rt.block_on(async {
            let srv = start(true).await;
            let tools = manifest(&srv.get("/api/v1/tools").await.json);
            let names: HashSet<&str> = tools.iter().map(|t| t.name.as_str()).collect();
            let exec = HttpToolExecutor::new(&srv.base, None).unwrap();
            let before = srv.audit().len();
            let mut sent = 0;
            for (k, (idx, choice)) in calls.iter().enumerate() {
                let tool = &tools[idx % tools.len()];
                let args = mutate_args(&tool.example, *choice);
                let call = ToolCall { tool_name: tool.name.clone(), arguments: args.clone(), call_id: format!("p{k}") };
                let reached = exec.build_request(tool, &args).is_ok();
                let _ = exec.execute(tool, &call).await;
                sent += usize::from(reached);
            }
            let events = srv.audit();
            let agent: Vec<_> = events[before..].iter().filter(|e| e.payload_snapshot["actor"] == "agent").collect();
            prop_assert_eq!(agent.len(), sent);
            prop_assert_eq!(events.len() - before, sent);
            for e in agent {
                let tool = e.payload_snapshot["tool"].as_str().unwrap();
                prop_assert!(names.contains(tool), "audit names unknown tool {}", tool);
                let t = tools.iter().find(|t| t.name == tool).unwrap();
                prop_assert_eq!(&e.block_id, &t.block_id);
                if t.http.method == HttpMethod::Get {
                    prop_assert_eq!(e.payload_snapshot["action"].as_str(), Some("tool_call"));
                }
            }
            Ok(())
        })?;
    }
}
