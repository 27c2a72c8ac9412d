//! Executes tool calls against the service's own HTTP API, so an agent call
//! and a console request take the same code path.

use async_trait::async_trait;
use reqwest::Url;
use serde_json::{Map, Value};

use super::config::SecretString;
use super::{error_result, AgentError, ToolCall, ToolExecutor};
use crate::manifest::ToolDescriptor;

/// Header naming the tool behind a request; marks it as an agent call.
pub const TOOL_HEADER: &str = "x-glassflow-tool";
/// Header carrying the tool call id.
pub const CALL_ID_HEADER: &str = "x-glassflow-call-id";

pub struct HttpToolExecutor {
    client: reqwest::Client,
    base_url: Url,
    token: Option<SecretString>,
}

impl HttpToolExecutor {
    /// `base_url` is the service origin, e.g. `http://127.0.0.1:8080`.
    pub fn new(base_url: &str, token: Option<SecretString>) -> Result<Self, AgentError> {
        let base_url = Url::parse(base_url).map_err(|_| AgentError::Config(format!("invalid service base URL `{base_url}`")))?;
        if base_url.cannot_be_a_base() {
            return Err(AgentError::Config(format!("invalid service base URL `{base_url}`")));
        }
        Ok(HttpToolExecutor {
            client: reqwest::Client::new(),
            base_url,
            token: token.filter(|t| !t.is_empty()),
        })
    }

    /// The request URL and JSON body for a call: path placeholders are
    /// filled from the arguments; the rest go to the query string (GET,
    /// DELETE) or the body (POST, PUT).
    pub fn build_request(&self, tool: &ToolDescriptor, arguments: &Value) -> Result<(Url, Option<Value>), Value> {
        let mut args: Map<String, Value> = match arguments {
            Value::Object(m) => m.clone(),
            Value::Null => Map::new(),
            _ => return Err(error_result("invalid_arguments", "tool arguments must be a JSON object")),
        };
        let mut url = self.base_url.clone();
        {
            let mut segments = url
                .path_segments_mut()
                .map_err(|_| error_result("tool_execution_failed", "service base URL cannot carry a path"))?;
            segments.pop_if_empty();
            for seg in tool.http.path.split('/').filter(|s| !s.is_empty()) {
                match seg.strip_prefix('{').and_then(|s| s.strip_suffix('}')) {
                    Some(name) => {
                        let value = match args.remove(name) {
                            Some(Value::String(s)) if !s.is_empty() => s,
                            Some(Value::Number(n)) => n.to_string(),
                            _ => {
                                return Err(error_result(
                                    "invalid_arguments",
                                    format!("missing path parameter `{name}`"),
                                ))
                            }
                        };
                        segments.push(&value);
                    }
                    None => {
                        segments.push(seg);
                    }
                }
            }
        }
        if tool.http.method.has_body() {
            return Ok((url, Some(Value::Object(args))));
        }
        if !args.is_empty() {
            let mut pairs = url.query_pairs_mut();
            for (k, v) in &args {
                match v {
                    Value::String(s) => pairs.append_pair(k, s),
                    Value::Null => continue,
                    other => pairs.append_pair(k, &other.to_string()),
                };
            }
        }
        Ok((url, None))
    }
}

#[async_trait]
impl ToolExecutor for HttpToolExecutor {
    async fn execute(&self, tool: &ToolDescriptor, call: &ToolCall) -> Result<Value, Value> {
        let (url, body) = self.build_request(tool, &call.arguments)?;
        let method = reqwest::Method::from_bytes(tool.http.method.as_str().as_bytes()).expect("standard method");
        let mut req = self
            .client
            .request(method, url)
            .header(TOOL_HEADER, &tool.name)
            .header(CALL_ID_HEADER, &call.call_id);
        if let Some(token) = &self.token {
            req = req.bearer_auth(token.expose());
        }
        if let Some(body) = body {
            req = req.json(&body);
        }
        let resp = req
            .send()
            .await
            .map_err(|e| error_result("tool_execution_failed", e.without_url().to_string()))?;
        let ok = resp.status().is_success();
        let status = resp.status().as_u16();
        let text = resp
            .text()
            .await
            .map_err(|e| error_result("tool_execution_failed", e.without_url().to_string()))?;
        let value: Value = if text.is_empty() {
            Value::Null
        } else {
            serde_json::from_str(&text).unwrap_or(Value::String(text))
        };
        if ok {
            Ok(value)
        } else if value.get("code").is_some() {
            Err(value)
        } else {
            Err(error_result("tool_execution_failed", format!("service answered {status}")))
        }
    }
}
