mod common;

use std::sync::Arc;

use common::{demo, first_row, reply, start, start_with};
use glassflow_core::graph::export_topology;
use glassflow_core::models::Predictor;
use glassflow_core::payload::FeatureVector;
use glassflow_core::xai::{explain_block, explain_pipeline, ExplainParams, Method};
use glassflow_server::routes::generate_routes;
use glassflow_server::service::{serve, ServeError, ServeOptions};
use glassflow_server::SecretString;
use serde_json::{json, Value};

#[tokio::test]
async fn graph_is_the_exported_topology() {
    let srv = start(false).await;
    let r = srv.get("/api/v1/graph").await;
    assert_eq!(r.status, 200);
    let expected = serde_json::to_value(export_topology(srv.pipeline.graph())).unwrap();
    assert_eq!(r.json, expected);
    srv.handle.close().await.unwrap();
}

#[tokio::test]
async fn unknown_block_is_a_404_envelope() {
    let srv = start(false).await;
    let r = srv.post("/api/v1/blocks/unknown/predict", &json!({"features": {}})).await;
    assert_eq!(r.status, 404);
    assert_eq!(r.json["code"], "unknown_block");
    assert_eq!(r.json["status"], 404);
    assert!(r.json["message"].is_string());
    assert_eq!(r.json["detail"]["block"], "unknown");
}

#[tokio::test]
async fn rejection_is_a_domain_outcome() {
    let d = demo(false);
    let mut features = first_row(&d);
    features["age"] = json!(-5.0);
    let srv = start_with(Arc::new(d.pipeline), ServeOptions::default()).await;
    let r = srv.post("/api/v1/pipeline/execute", &json!({"features": features})).await;
    assert_eq!(r.status, 200, "{}", r.text);
    assert_eq!(r.json["status"], "rejected");
    assert_eq!(r.json["reason"], "age out of range");
    assert_eq!(r.json["block"], "filter");
    let trace_ref = r.json["trace_ref"].as_str().unwrap().to_string();
    assert_eq!(r.json["run_id"], trace_ref.as_str());

    let t = srv.get(&format!("/api/v1/trace?run_id={trace_ref}")).await;
    assert_eq!(t.status, 200);
    assert!(!t.json["events"].as_array().unwrap().is_empty());
    assert!(t.json["events"].as_array().unwrap().iter().all(|e| e["run_id"] == trace_ref.as_str()));

    let listing = srv.get("/api/v1/trace").await;
    assert!(listing.json["runs"].as_array().unwrap().iter().any(|r| r["run_id"] == trace_ref.as_str()));
    let missing = srv.get("/api/v1/trace?run_id=nope").await;
    assert_eq!((missing.status, missing.json["code"].as_str()), (404, Some("unknown_run")));
}

#[tokio::test]
async fn completed_runs_release_a_decision() {
    let d = demo(false);
    let features = first_row(&d);
    let srv = start_with(Arc::new(d.pipeline), ServeOptions::default()).await;
    let r = srv.post("/api/v1/pipeline/execute", &json!({"features": features})).await;
    assert_eq!(r.status, 200, "{}", r.text);
    assert_eq!(r.json["status"], "completed");
    let classes: Vec<&str> = srv.pipeline.graph().classes().unwrap().iter().map(String::as_str).collect();
    assert!(classes.contains(&r.json["decision"]["label"].as_str().unwrap()));
    let total: f64 = r.json["scores"].as_object().unwrap().values().map(|v| v.as_f64().unwrap()).sum();
    assert!((total - 1.0).abs() < 1e-9);
}

#[tokio::test]
async fn predict_returns_class_probabilities() {
    let d = demo(false);
    let features = first_row(&d);
    let srv = start_with(Arc::new(d.pipeline), ServeOptions::default()).await;
    let r = srv.post("/api/v1/blocks/logreg_1/predict", &json!({"features": features})).await;
    assert_eq!(r.status, 200, "{}", r.text);
    assert_eq!(r.json["block"], "logreg_1");
    let scores = r.json["scores"].as_object().unwrap();
    let total: f64 = scores.values().map(|v| v.as_f64().unwrap()).sum();
    assert!((total - 1.0).abs() < 1e-9);
    let top = scores
        .iter()
        .max_by(|a, b| a.1.as_f64().partial_cmp(&b.1.as_f64()).unwrap())
        .unwrap()
        .0;
    assert_eq!(r.json["label"], top.as_str());

    let mut missing = features.clone();
    missing.as_object_mut().unwrap().remove("age");
    let bad = srv.post("/api/v1/blocks/logreg_1/predict", &json!({"features": missing})).await;
    assert_eq!((bad.status, bad.json["code"].as_str()), (422, Some("schema_mismatch")));
    let mut extra = features.clone();
    extra["shoe_size"] = json!(44);
    let bad = srv.post("/api/v1/blocks/logreg_1/predict", &json!({"features": extra})).await;
    assert_eq!((bad.status, bad.json["code"].as_str()), (422, Some("unknown_feature")));
}

#[tokio::test]
async fn explain_responses_are_the_solver_output_byte_for_byte() {
    let d = demo(false);
    let features = first_row(&d);
    let srv = start_with(Arc::new(d.pipeline), ServeOptions::default()).await;
    let graph = srv.pipeline.graph().clone();
    let schema = graph.input_schema().unwrap().clone();
    let x = FeatureVector::conform(
        &schema,
        features.as_object().unwrap().iter().map(|(k, v)| (k.as_str(), v.as_f64().unwrap())),
    )
    .unwrap();
    for (method, body) in [
        (Method::ExactShapley, json!({"features": features, "seed": 3, "background_size": 10})),
        (Method::KernelShap, json!({"features": features, "seed": 3, "n_samples": 64, "background_size": 10})),
        (Method::Lime, json!({"features": features, "seed": 3, "n_samples": 300, "background_size": 10})),
    ] {
        let params: ExplainParams = serde_json::from_value({
            let mut p = body.clone();
            p.as_object_mut().unwrap().remove("features");
            p
        })
        .unwrap();
        let r = srv
            .post(&format!("/api/v1/blocks/tree_1/explain/{}", method.segment()), &body)
            .await;
        assert_eq!(r.status, 200, "{}", r.text);
        let tree_x = x.project(graph.model_state("tree_1").unwrap().feature_schema()).unwrap();
        let local = explain_block(&graph, "tree_1", method, &tree_x, &params).unwrap();
        assert_eq!(r.text, serde_json::to_string(&local).unwrap(), "{method:?}");

        let r = srv
            .post(&format!("/api/v1/pipeline/explain/{}", method.segment()), &body)
            .await;
        assert_eq!(r.status, 200, "{}", r.text);
        let local = explain_pipeline(&graph, method, &x, &params).unwrap();
        assert_eq!(r.text, serde_json::to_string(&local).unwrap(), "{method:?}");
    }
    let r = srv.post("/api/v1/blocks/tree_1/explain/anchors", &json!({"features": features})).await;
    assert_eq!((r.status, r.json["code"].as_str()), (404, Some("unknown_method")));
}

#[tokio::test]
async fn whatif_is_a_dry_run() {
    let d = demo(false);
    let features = first_row(&d);
    let srv = start_with(Arc::new(d.pipeline), ServeOptions::default()).await;
    let r = srv
        .post(
            "/api/v1/pipeline/whatif",
            &json!({"features": features, "overrides": {"cholesterol": 450.0}}),
        )
        .await;
    assert_eq!(r.status, 200, "{}", r.text);
    assert_eq!(r.json["decision"]["label"], "disease");
    assert_eq!(r.json["decision"]["source_block"], "guard_1");
    let trace_ref = r.json["trace_ref"].as_str().unwrap();
    let t = srv.get(&format!("/api/v1/trace?run_id={trace_ref}")).await;
    assert!(t.json["events"].as_array().unwrap().iter().all(|e| e["dry_run"] == true));
    let bad = srv
        .post("/api/v1/pipeline/whatif", &json!({"features": features, "overrides": {"nope": 1.0}}))
        .await;
    assert_eq!((bad.status, bad.json["code"].as_str()), (422, Some("unknown_feature")));
}

#[tokio::test]
async fn malformed_requests_use_the_envelope() {
    let srv = start(false).await;
    let r = srv
        .client
        .post(srv.url("/api/v1/pipeline/execute"))
        .header("content-type", "application/json")
        .body("{not json")
        .send()
        .await
        .unwrap();
    let r = reply(r).await;
    assert_eq!((r.status, r.json["code"].as_str()), (400, Some("invalid_request")));

    let r = srv.post("/api/v1/pipeline/execute", &json!({"features": {}, "extra": 1})).await;
    assert_eq!((r.status, r.json["code"].as_str()), (400, Some("invalid_request")));

    let r = srv.get("/api/v1/no/such/route").await;
    assert_eq!((r.status, r.json["code"].as_str()), (404, Some("unknown_route")));
    let r = srv.send("DELETE", "/api/v1/graph", None).await;
    assert_eq!((r.status, r.json["code"].as_str()), (404, Some("unknown_route")));
    let r = srv.get("/elsewhere").await;
    assert_eq!((r.status, r.json["code"].as_str()), (404, Some("unknown_route")));
}

#[tokio::test]
async fn openapi_describes_the_route_table() {
    let srv = start(true).await;
    let r = srv.get("/api/v1/openapi").await;
    assert_eq!(r.status, 200);
    assert_eq!(r.json["openapi"], "3.1.0");
    let mut described = glassflow_server::openapi::described_routes(&r.json);
    let mut table: Vec<(String, String)> = generate_routes(srv.pipeline.graph())
        .into_iter()
        .map(|r| (r.method.as_str().to_string(), r.path))
        .collect();
    described.sort();
    table.sort();
    assert_eq!(described, table);
}

#[tokio::test]
async fn bearer_token_guards_the_api() {
    let token = "s3cret-token";
    let srv = start_with(
        Arc::new(demo(false).pipeline),
        ServeOptions {
            token: Some(SecretString::new(token)),
            ..ServeOptions::default()
        },
    )
    .await;
    let r = srv.get("/api/v1/graph").await;
    assert_eq!((r.status, r.json["code"].as_str()), (401, Some("unauthorized")));
    assert!(!r.text.contains(token));
    let wrong = reply(srv.client.get(srv.url("/api/v1/graph")).bearer_auth("nope").send().await.unwrap()).await;
    assert_eq!(wrong.status, 401);
    let ok = reply(srv.client.get(srv.url("/api/v1/graph")).bearer_auth(token).send().await.unwrap()).await;
    assert_eq!(ok.status, 200);
}

#[tokio::test]
async fn serves_static_assets_and_stops_on_close() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("index.html"), "<h1>console</h1>").unwrap();
    let srv = start_with(
        Arc::new(demo(false).pipeline),
        ServeOptions {
            ui_dir: Some(dir.path().to_path_buf()),
            ..ServeOptions::default()
        },
    )
    .await;
    let r = srv.get("/").await;
    assert_eq!((r.status, r.text.as_str()), (200, "<h1>console</h1>"));
    let api = srv.get("/api/v1/nope").await;
    assert_eq!(api.json["code"], "unknown_route");

    let url = srv.url("/api/v1/graph");
    srv.handle.close().await.unwrap();
    assert!(reqwest::get(&url).await.is_err());
}

#[tokio::test]
async fn occupied_port_is_a_bind_failure() {
    let srv = start(false).await;
    let taken = srv.handle.local_addr();
    let err = serve(taken, srv.pipeline.clone(), ServeOptions::default()).await.err().unwrap();
    assert!(matches!(err, ServeError::BindFailure { addr, .. } if addr == taken));
}

#[tokio::test]
async fn responses_are_json() {
    let srv = start(false).await;
    for path in ["/api/v1/graph", "/api/v1/tools", "/api/v1/openapi", "/api/v1/control/status", "/api/v1/nope"] {
        let resp = srv.client.get(srv.url(path)).send().await.unwrap();
        let ct = resp.headers()["content-type"].to_str().unwrap().to_string();
        assert!(ct.starts_with("application/json"), "{path}: {ct}");
        let v: Value = resp.json().await.unwrap();
        assert!(v.is_object() || v.is_array());
    }
}
