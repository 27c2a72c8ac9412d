#![allow(dead_code)]

use std::sync::Arc;

use glassflow_core::demo::{build_demo, Demo, DemoOptions};
use glassflow_core::graph::{Pipeline, TraceEvent};
use glassflow_server::service::{serve, ServeOptions, ServiceHandle};
use serde_json::Value;

pub struct TestServer {
    pub handle: ServiceHandle,
    pub pipeline: Arc<Pipeline>,
    pub base: String,
    pub client: reqwest::Client,
}

pub fn demo(extended: bool) -> Demo {
    build_demo(&DemoOptions {
        extended,
        ..DemoOptions::default()
    })
    .expect("demo builds")
}

pub async fn start_with(pipeline: Arc<Pipeline>, opts: ServeOptions) -> TestServer {
    let handle = serve("127.0.0.1:0".parse().unwrap(), pipeline.clone(), opts)
        .await
        .expect("bind an ephemeral port");
    TestServer {
        base: handle.base_url(),
        handle,
        pipeline,
        client: reqwest::Client::new(),
    }
}

pub async fn start(extended: bool) -> TestServer {
    start_with(Arc::new(demo(extended).pipeline), ServeOptions::default()).await
}

pub struct Reply {
    pub status: u16,
    pub text: String,
    pub json: Value,
}

impl TestServer {
    pub fn url(&self, path: &str) -> String {
        format!("{}{}", self.base, path)
    }

    pub async fn send(&self, method: &str, path: &str, body: Option<&Value>) -> Reply {
        let method = reqwest::Method::from_bytes(method.as_bytes()).unwrap();
        let mut req = self.client.request(method, self.url(path));
        if let Some(b) = body {
            req = req.json(b);
        }
        reply(req.send().await.expect("request sent")).await
    }

    pub async fn get(&self, path: &str) -> Reply {
        self.send("GET", path, None).await
    }

    pub async fn post(&self, path: &str, body: &Value) -> Reply {
        self.send("POST", path, Some(body)).await
    }

    pub fn audit(&self) -> Vec<TraceEvent> {
        self.pipeline.store().audit_events()
    }
}

pub async fn reply(resp: reqwest::Response) -> Reply {
    let status = resp.status().as_u16();
    let text = resp.text().await.expect("body");
    let json = serde_json::from_str(&text).unwrap_or(Value::Null);
    Reply { status, text, json }
}

/// The demo's first training row as a feature map.
pub fn first_row(demo: &Demo) -> Value {
    let row = &demo.train.rows()[0];
    Value::Object(row.iter().map(|(n, v)| (n.to_string(), serde_json::json!(v))).collect())
}
