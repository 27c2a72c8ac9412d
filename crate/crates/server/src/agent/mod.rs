//! The tool-calling agent: a loop between a chat-completion endpoint and
//! the generated tool manifest.
//!
//! The endpoint is anything implementing [`ChatEndpoint`]: the HTTP adapter
//! in [`chat_completions`] or the scripted [`MockEndpoint`]. Tools run
//! through a [`ToolExecutor`], normally [`HttpToolExecutor`], which calls the
//! service's own API over loopback HTTP so agent and console see the same
//! responses.

pub mod chat_completions;
pub mod config;
pub mod mock;
pub mod tools;

use async_trait::async_trait;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use thiserror::Error;

pub use chat_completions::ChatCompletionsEndpoint;
pub use config::{AgentConfig, SecretString};
pub use mock::MockEndpoint;
pub use tools::HttpToolExecutor;

use crate::manifest::ToolDescriptor;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Role {
    User,
    Assistant,
    Tool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ToolCall {
    pub tool_name: String,
    #[serde(default)]
    pub arguments: Value,
    #[serde(default)]
    pub call_id: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ToolResult {
    pub call_id: String,
    pub result: Value,
    /// The result is an error object (`code`, `message`) rather than the
    /// endpoint's response.
    #[serde(default)]
    pub is_error: bool,
}

/// One history entry. An assistant turn carries at most one tool call; a
/// reply with several calls becomes several consecutive assistant turns.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChatTurn {
    pub role: Role,
    #[serde(default)]
    pub content: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tool_call: Option<ToolCall>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tool_result: Option<ToolResult>,
}

impl ChatTurn {
    pub fn user(content: impl Into<String>) -> Self {
        ChatTurn {
            role: Role::User,
            content: content.into(),
            tool_call: None,
            tool_result: None,
        }
    }

    pub fn assistant(content: impl Into<String>) -> Self {
        ChatTurn {
            role: Role::Assistant,
            content: content.into(),
            tool_call: None,
            tool_result: None,
        }
    }

    pub fn assistant_call(content: impl Into<String>, call: ToolCall) -> Self {
        ChatTurn {
            tool_call: Some(call),
            ..ChatTurn::assistant(content)
        }
    }

    pub fn tool(result: ToolResult) -> Self {
        ChatTurn {
            role: Role::Tool,
            content: String::new(),
            tool_call: None,
            tool_result: Some(result),
        }
    }
}

/// What the endpoint answered: text, tool calls, or both.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct AssistantReply {
    #[serde(default)]
    pub content: String,
    #[serde(default)]
    pub tool_calls: Vec<ToolCall>,
}

impl AssistantReply {
    pub fn text(content: impl Into<String>) -> Self {
        AssistantReply {
            content: content.into(),
            tool_calls: Vec::new(),
        }
    }

    pub fn call(tool_name: impl Into<String>, arguments: Value, call_id: impl Into<String>) -> Self {
        AssistantReply {
            content: String::new(),
            tool_calls: vec![ToolCall {
                tool_name: tool_name.into(),
                arguments,
                call_id: call_id.into(),
            }],
        }
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum AgentError {
    #[error("chat endpoint unreachable: {0}")]
    EndpointUnreachable(String),
    #[error("chat endpoint answered {status}: {message}")]
    EndpointError { status: u16, message: String },
    #[error("chat endpoint reply is malformed: {0}")]
    InvalidReply(String),
    #[error("mock script exhausted")]
    ScriptExhausted,
    #[error("the tool manifest is empty")]
    EmptyManifest,
    #[error("invalid agent configuration: {0}")]
    Config(String),
}

#[async_trait]
pub trait ChatEndpoint: Send + Sync {
    async fn complete(&self, history: &[ChatTurn], tools: &[ToolDescriptor]) -> Result<AssistantReply, AgentError>;
}

/// Runs one tool call. `Err` carries an error object with at least `code`
/// and `message`; it is handed to the model, not raised.
#[async_trait]
pub trait ToolExecutor: Send + Sync {
    async fn execute(&self, tool: &ToolDescriptor, call: &ToolCall) -> Result<Value, Value>;
}

pub fn error_result(code: &str, message: impl Into<String>) -> Value {
    json!({ "code": code, "message": message.into() })
}

/// A finished exchange: the full history and whether the round limit cut
/// it short.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Conversation {
    pub turns: Vec<ChatTurn>,
    pub truncated: bool,
}

/// Appends `user_message` and loops: ask the endpoint; execute any tool
/// calls and append their results; stop on a plain-text reply. A reply that
/// asks for tools after `max_tool_rounds` rounds is dropped and the result is
/// flagged truncated. Earlier turns are never modified.
pub async fn run_conversation(
    endpoint: &dyn ChatEndpoint,
    executor: &dyn ToolExecutor,
    manifest: &[ToolDescriptor],
    user_message: &str,
    history: Vec<ChatTurn>,
    max_tool_rounds: usize,
) -> Result<Conversation, AgentError> {
    if manifest.is_empty() {
        return Err(AgentError::EmptyManifest);
    }
    if max_tool_rounds == 0 {
        return Err(AgentError::Config("max_tool_rounds must be at least 1".into()));
    }
    let mut turns = history;
    turns.push(ChatTurn::user(user_message));
    let mut rounds = 0;
    loop {
        let reply = endpoint.complete(&turns, manifest).await?;
        if reply.tool_calls.is_empty() {
            turns.push(ChatTurn::assistant(reply.content));
            return Ok(Conversation { turns, truncated: false });
        }
        if rounds == max_tool_rounds {
            tracing::warn!(max_tool_rounds, "agent round limit reached");
            return Ok(Conversation { turns, truncated: true });
        }
        rounds += 1;
        let prior = turns.len();
        let mut calls = reply.tool_calls;
        for (i, call) in calls.iter_mut().enumerate() {
            if call.call_id.is_empty() {
                call.call_id = format!("call_{}_{}", prior, i);
            }
        }
        for (i, call) in calls.iter().enumerate() {
            let content = if i == 0 { reply.content.clone() } else { String::new() };
            turns.push(ChatTurn::assistant_call(content, call.clone()));
        }
        for call in calls {
            let outcome = match manifest.iter().find(|t| t.name == call.tool_name) {
                Some(tool) => {
                    tracing::info!(tool = %tool.name, call_id = %call.call_id, "agent tool call");
                    executor.execute(tool, &call).await
                }
                None => Err(error_result("unknown_tool", format!("no tool named `{}`", call.tool_name))),
            };
            let (result, is_error) = match outcome {
                Ok(v) => (v, false),
                Err(v) => (v, true),
            };
            turns.push(ChatTurn::tool(ToolResult {
                call_id: call.call_id,
                result,
                is_error,
            }));
        }
    }
}

/// Checks the history invariants: every tool result answers an earlier
/// call, the history opens with a user turn, and roles carry the right
/// attachments.
pub fn check_history(turns: &[ChatTurn]) -> Result<(), String> {
    if let Some(first) = turns.first() {
        if first.role != Role::User {
            return Err("history must start with a user turn".into());
        }
    }
    let mut open: Vec<&str> = Vec::new();
    for (i, t) in turns.iter().enumerate() {
        match t.role {
            Role::User => {
                if t.tool_call.is_some() || t.tool_result.is_some() {
                    return Err(format!("turn {i}: user turns carry no tool data"));
                }
            }
            Role::Assistant => {
                if t.tool_result.is_some() {
                    return Err(format!("turn {i}: assistant turns carry no tool result"));
                }
                if let Some(c) = &t.tool_call {
                    open.push(&c.call_id);
                }
            }
            Role::Tool => {
                let r = t.tool_result.as_ref().ok_or(format!("turn {i}: tool turn without result"))?;
                let pos = open
                    .iter()
                    .position(|id| *id == r.call_id)
                    .ok_or(format!("turn {i}: result for unknown call `{}`", r.call_id))?;
                open.remove(pos);
            }
        }
    }
    Ok(())
}
