//! Agent configuration. The API key comes only from the environment and
//! never appears in logs, `Debug` output or error messages.

use std::fmt;

use super::AgentError;

pub const ENV_URL: &str = "GLASSFLOW_AGENT_URL";
pub const ENV_KEY: &str = "GLASSFLOW_AGENT_KEY";
pub const ENV_MODEL: &str = "GLASSFLOW_AGENT_MODEL";

pub const DEFAULT_MAX_TOOL_ROUNDS: usize = 8;

/// A string that is redacted wherever it could be printed.
#[derive(Clone, PartialEq, Eq, Default)]
pub struct SecretString(String);

impl SecretString {
    pub fn new(s: impl Into<String>) -> Self {
        SecretString(s.into())
    }

    pub fn expose(&self) -> &str {
        &self.0
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    /// Replaces every occurrence of the secret in `text`.
    pub fn redact(&self, text: &str) -> String {
        if self.0.is_empty() {
            text.to_string()
        } else {
            text.replace(&self.0, "[redacted]")
        }
    }
}

impl fmt::Debug for SecretString {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("SecretString([redacted])")
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AgentConfig {
    /// Full URL of the chat-completion endpoint.
    pub endpoint_url: String,
    pub api_key: SecretString,
    pub model_name: String,
    pub max_tool_rounds: usize,
    pub temperature: f64,
}

impl AgentConfig {
    /// Reads the three environment variables; `Ok(None)` when no endpoint is
    /// configured.
    pub fn from_env() -> Result<Option<AgentConfig>, AgentError> {
        AgentConfig::from_lookup(|k| std::env::var(k).ok())
    }

    pub fn from_lookup(lookup: impl Fn(&str) -> Option<String>) -> Result<Option<AgentConfig>, AgentError> {
        let Some(url) = lookup(ENV_URL).filter(|u| !u.trim().is_empty()) else {
            return Ok(None);
        };
        let model = lookup(ENV_MODEL)
            .filter(|m| !m.trim().is_empty())
            .ok_or_else(|| AgentError::Config(format!("{ENV_URL} is set but {ENV_MODEL} is not")))?;
        let cfg = AgentConfig {
            endpoint_url: url.trim().to_string(),
            api_key: SecretString::new(lookup(ENV_KEY).unwrap_or_default()),
            model_name: model.trim().to_string(),
            max_tool_rounds: DEFAULT_MAX_TOOL_ROUNDS,
            temperature: 0.0,
        };
        cfg.validate()?;
        Ok(Some(cfg))
    }

    pub fn validate(&self) -> Result<(), AgentError> {
        if self.max_tool_rounds < 1 {
            return Err(AgentError::Config("max_tool_rounds must be at least 1".into()));
        }
        if !(self.endpoint_url.starts_with("http://") || self.endpoint_url.starts_with("https://")) {
            return Err(AgentError::Config(format!("{ENV_URL} must be an http(s) URL")));
        }
        if !self.temperature.is_finite() || self.temperature < 0.0 {
            return Err(AgentError::Config("temperature must be a nonnegative number".into()));
        }
        Ok(())
    }
}
