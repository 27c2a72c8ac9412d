//! A scripted stand-in for the chat endpoint.

use std::collections::VecDeque;

use async_trait::async_trait;
use parking_lot::Mutex;

use super::{AgentError, AssistantReply, ChatEndpoint, ChatTurn};
use crate::manifest::ToolDescriptor;

/// Replays scripted replies verbatim, in order, one per request.
#[derive(Debug, Default)]
pub struct MockEndpoint {
    script: Mutex<VecDeque<AssistantReply>>,
    /// History length seen by each request.
    requests: Mutex<Vec<usize>>,
}

impl MockEndpoint {
    pub fn new(script: Vec<AssistantReply>) -> Self {
        MockEndpoint {
            script: Mutex::new(script.into()),
            requests: Mutex::new(Vec::new()),
        }
    }

    /// Parses a JSON array of replies (`{content, tool_calls}` objects).
    pub fn from_json(text: &str) -> Result<Self, serde_json::Error> {
        Ok(MockEndpoint::new(serde_json::from_str(text)?))
    }

    pub fn remaining(&self) -> usize {
        self.script.lock().len()
    }

    pub fn requests(&self) -> Vec<usize> {
        self.requests.lock().clone()
    }
}

#[async_trait]
impl ChatEndpoint for MockEndpoint {
    async fn complete(&self, history: &[ChatTurn], _tools: &[ToolDescriptor]) -> Result<AssistantReply, AgentError> {
        self.requests.lock().push(history.len());
        self.script.lock().pop_front().ok_or(AgentError::ScriptExhausted)
    }
}
