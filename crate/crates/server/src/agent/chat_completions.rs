//! Adapter for chat-completion HTTP endpoints (messages array, tools array,
//! `tool_calls` in replies). All wire-format knowledge lives here; the
//! exact JSON is documented in `docs/agent.md`.

use async_trait::async_trait;
use serde_json::{json, Value};

use super::config::AgentConfig;
use super::{AgentError, AssistantReply, ChatEndpoint, ChatTurn, Role, ToolCall};
use crate::manifest::ToolDescriptor;

pub const SYSTEM_PROMPT: &str = "You operate an explainable, controllable prediction pipeline through the \
provided tools. Use them to inspect the pipeline graph, run or explain predictions, read audit traces and, \
when asked, change controls. Answer from tool results; do not guess values.";

/// The `tools` array: one function per descriptor.
pub fn wire_tools(tools: &[ToolDescriptor]) -> Value {
    Value::Array(
        tools
            .iter()
            .map(|t| {
                json!({
                    "type": "function",
                    "function": {"name": t.name, "description": t.description, "parameters": t.parameters}
                })
            })
            .collect(),
    )
}

/// The `messages` array. Consecutive assistant turns with tool calls are
/// merged into one message with a `tool_calls` array.
pub fn wire_messages(system_prompt: &str, history: &[ChatTurn]) -> Value {
    let mut out = vec![json!({"role": "system", "content": system_prompt})];
    let mut i = 0;
    while i < history.len() {
        let turn = &history[i];
        match turn.role {
            Role::User => out.push(json!({"role": "user", "content": turn.content})),
            Role::Assistant if turn.tool_call.is_none() => {
                out.push(json!({"role": "assistant", "content": turn.content}))
            }
            Role::Assistant => {
                let content = if turn.content.is_empty() { Value::Null } else { json!(turn.content) };
                let mut calls = Vec::new();
                while let Some(call) = history.get(i).filter(|t| t.role == Role::Assistant).and_then(|t| t.tool_call.as_ref()) {
                    calls.push(json!({
                        "id": call.call_id,
                        "type": "function",
                        "function": {"name": call.tool_name, "arguments": call.arguments.to_string()}
                    }));
                    i += 1;
                }
                out.push(json!({"role": "assistant", "content": content, "tool_calls": calls}));
                continue;
            }
            Role::Tool => {
                if let Some(r) = &turn.tool_result {
                    out.push(json!({"role": "tool", "tool_call_id": r.call_id, "content": r.result.to_string()}));
                }
            }
        }
        i += 1;
    }
    Value::Array(out)
}

pub fn wire_request(cfg: &AgentConfig, history: &[ChatTurn], tools: &[ToolDescriptor]) -> Value {
    json!({
        "model": cfg.model_name,
        "temperature": cfg.temperature,
        "messages": wire_messages(SYSTEM_PROMPT, history),
        "tools": wire_tools(tools),
    })
}

/// Reads `choices[0].message`. Tool-call arguments arrive as a JSON string;
/// one that does not parse is passed on as a string, which the executor
/// rejects with an error result the model can see.
pub fn parse_reply(body: &Value) -> Result<AssistantReply, AgentError> {
    let message = body
        .pointer("/choices/0/message")
        .ok_or_else(|| AgentError::InvalidReply("missing choices[0].message".into()))?;
    let content = message.get("content").and_then(Value::as_str).unwrap_or_default().to_string();
    let mut tool_calls = Vec::new();
    for call in message.get("tool_calls").and_then(Value::as_array).into_iter().flatten() {
        let name = call
            .pointer("/function/name")
            .and_then(Value::as_str)
            .ok_or_else(|| AgentError::InvalidReply("tool call without function name".into()))?;
        let arguments = match call.pointer("/function/arguments") {
            Some(Value::String(raw)) if raw.trim().is_empty() => json!({}),
            Some(Value::String(raw)) => serde_json::from_str(raw).unwrap_or_else(|_| Value::String(raw.clone())),
            Some(other) => other.clone(),
            None => json!({}),
        };
        tool_calls.push(ToolCall {
            tool_name: name.to_string(),
            arguments,
            call_id: call.get("id").and_then(Value::as_str).unwrap_or_default().to_string(),
        });
    }
    Ok(AssistantReply { content, tool_calls })
}

/// A live chat-completion endpoint reached over HTTP.
pub struct ChatCompletionsEndpoint {
    cfg: AgentConfig,
    client: reqwest::Client,
}

impl ChatCompletionsEndpoint {
    pub fn new(cfg: AgentConfig) -> Result<Self, AgentError> {
        cfg.validate()?;
        Ok(ChatCompletionsEndpoint {
            cfg,
            client: reqwest::Client::new(),
        })
    }

    pub fn config(&self) -> &AgentConfig {
        &self.cfg
    }
}

#[async_trait]
impl ChatEndpoint for ChatCompletionsEndpoint {
    async fn complete(&self, history: &[ChatTurn], tools: &[ToolDescriptor]) -> Result<AssistantReply, AgentError> {
        let key = &self.cfg.api_key;
        let mut req = self.client.post(&self.cfg.endpoint_url).json(&wire_request(&self.cfg, history, tools));
        if !key.is_empty() {
            req = req.bearer_auth(key.expose());
        }
        let resp = req
            .send()
            .await
            .map_err(|e| AgentError::EndpointUnreachable(key.redact(&e.without_url().to_string())))?;
        let status = resp.status();
        let text = resp
            .text()
            .await
            .map_err(|e| AgentError::EndpointUnreachable(key.redact(&e.without_url().to_string())))?;
        if !status.is_success() {
            let mut message = key.redact(&text);
            if message.len() > 500 {
                let cut = (0..=500).rev().find(|&i| message.is_char_boundary(i)).unwrap_or(0);
                message.truncate(cut);
            }
            return Err(AgentError::EndpointError {
                status: status.as_u16(),
                message,
            });
        }
        let body: Value = serde_json::from_str(&text).map_err(|e| AgentError::InvalidReply(e.to_string()))?;
        parse_reply(&body)
    }
}
