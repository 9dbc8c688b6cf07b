use std::collections::VecDeque;
use std::path::Path;
use std::time::Duration;

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChatMessage {
    pub role: String,
    pub content: String,
}

impl ChatMessage {
    pub fn system(content: impl Into<String>) -> Self {
        ChatMessage { role: "system".into(), content: content.into() }
    }
    pub fn user(content: impl Into<String>) -> Self {
        ChatMessage { role: "user".into(), content: content.into() }
    }
    pub fn assistant(content: impl Into<String>) -> Self {
        ChatMessage { role: "assistant".into(), content: content.into() }
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ProviderError {
    #[error("PROVIDER_TIMEOUT after {0:?}")]
    Timeout(Duration),
    #[error("PROVIDER_HTTP({0})")]
    Http(u16),
    #[error("provider transport error: {0}")]
    Transport(String),
    #[error("provider response malformed: {0}")]
    BadResponse(String),
    #[error("provider configuration: {0}")]
    Config(String),
    #[error("no recorded response left to replay")]
    ReplayExhausted,
}

impl ProviderError {
    pub fn code(&self) -> String {
        match self {
            ProviderError::Timeout(_) => "PROVIDER_TIMEOUT".into(),
            ProviderError::Http(s) => format!("PROVIDER_HTTP({s})"),
            ProviderError::Transport(_) => "PROVIDER_TRANSPORT".into(),
            ProviderError::BadResponse(_) => "PROVIDER_BAD_RESPONSE".into(),
            ProviderError::Config(_) => "PROVIDER_CONFIG".into(),
            ProviderError::ReplayExhausted => "REPLAY_EXHAUSTED".into(),
        }
    }
}

/// A chat-completion backend. Calls are deterministic for a given message list.
pub trait Provider: Send {
    fn complete(&mut self, messages: &[ChatMessage]) -> Result<String, ProviderError>;

    /// Estimated currency cost of one call.
    fn cost_per_call(&self) -> f64 {
        0.0
    }

    fn name(&self) -> String;
}

fn default_timeout() -> f64 {
    60.0
}

fn default_max_repairs() -> u32 {
    3
}

/// Live chat-completions endpoint.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProviderConfig {
    pub endpoint_url: String,
    pub model: String,
    pub temperature: f64,
    #[serde(default = "default_timeout")]
    pub timeout_s: f64,
    #[serde(default = "default_max_repairs")]
    pub max_repairs: u32,
    /// Name of the environment variable holding the API key.
    pub api_key_env: String,
    #[serde(default)]
    pub cost_per_call: f64,
}

impl ProviderConfig {
    pub fn validate(&self) -> Result<(), String> {
        if self.temperature != 0.0 {
            return Err(format!("provider.temperature must be 0, got {}", self.temperature));
        }
        if !(self.timeout_s > 0.0 && self.timeout_s.is_finite()) {
            return Err("provider.timeout_s must be positive".into());
        }
        if self.endpoint_url.is_empty() || self.model.is_empty() || self.api_key_env.is_empty() {
            return Err("provider.endpoint_url, provider.model and provider.api_key_env are required".into());
        }
        Ok(())
    }
}

pub struct HttpProvider {
    config: ProviderConfig,
    api_key: String,
    agent: ureq::Agent,
}

impl std::fmt::Debug for HttpProvider {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("HttpProvider")
            .field("endpoint_url", &self.config.endpoint_url)
            .field("model", &self.config.model)
            .finish_non_exhaustive()
    }
}

impl HttpProvider {
    /// Fails if the key variable is unset, before any request is made.
    pub fn from_config(config: ProviderConfig) -> Result<Self, ProviderError> {
        config.validate().map_err(ProviderError::Config)?;
        let api_key = std::env::var(&config.api_key_env)
            .ok()
            .filter(|k| !k.is_empty())
            .ok_or_else(|| ProviderError::Config(format!("environment variable {} is not set", config.api_key_env)))?;
        let agent: ureq::Agent = ureq::Agent::config_builder()
            .timeout_global(Some(Duration::from_secs_f64(config.timeout_s)))
            .http_status_as_error(false)
            .build()
            .into();
        Ok(HttpProvider { config, api_key, agent })
    }
}

impl Provider for HttpProvider {
    fn complete(&mut self, messages: &[ChatMessage]) -> Result<String, ProviderError> {
        let body = serde_json::json!({
            "model": self.config.model,
            "temperature": 0,
            "messages": messages,
        });
        let timeout = Duration::from_secs_f64(self.config.timeout_s);
        let mut resp = self
            .agent
            .post(&self.config.endpoint_url)
            .header("Authorization", &format!("Bearer {}", self.api_key))
            .send_json(&body)
            .map_err(|e| match e {
                ureq::Error::Timeout(_) => ProviderError::Timeout(timeout),
                other => ProviderError::Transport(other.to_string()),
            })?;
        let status = resp.status().as_u16();
        if !(200..300).contains(&status) {
            return Err(ProviderError::Http(status));
        }
        let value: serde_json::Value = resp.body_mut().read_json().map_err(|e| match e {
            ureq::Error::Timeout(_) => ProviderError::Timeout(timeout),
            other => ProviderError::BadResponse(other.to_string()),
        })?;
        value
            .pointer("/choices/0/message/content")
            .and_then(|v| v.as_str())
            .map(str::to_string)
            .ok_or_else(|| ProviderError::BadResponse("missing choices[0].message.content".into()))
    }

    fn cost_per_call(&self) -> f64 {
        self.config.cost_per_call
    }

    fn name(&self) -> String {
        format!("http:{}", self.config.model)
    }
}

/// Returns canned responses in order; the last one repeats once the script runs out.
#[derive(Debug, Clone)]
pub struct ScriptedProvider {
    script: Vec<String>,
    next: usize,
    calls: usize,
}

impl ScriptedProvider {
    pub fn new(script: Vec<String>) -> Self {
        assert!(!script.is_empty(), "scripted provider needs at least one response");
        ScriptedProvider { script, next: 0, calls: 0 }
    }

    /// Reads a JSON array of response strings.
    pub fn from_file(path: &Path) -> Result<Self, ProviderError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| ProviderError::Config(format!("{}: {e}", path.display())))?;
        let script: Vec<String> = serde_json::from_str(&text)
            .map_err(|e| ProviderError::Config(format!("{}: expected a JSON array of strings: {e}", path.display())))?;
        if script.is_empty() {
            return Err(ProviderError::Config(format!("{}: script is empty", path.display())));
        }
        Ok(ScriptedProvider::new(script))
    }

    pub fn calls(&self) -> usize {
        self.calls
    }
}

impl Provider for ScriptedProvider {
    fn complete(&mut self, _messages: &[ChatMessage]) -> Result<String, ProviderError> {
        let out = self.script[self.next.min(self.script.len() - 1)].clone();
        self.next += 1;
        self.calls += 1;
        Ok(out)
    }

    fn name(&self) -> String {
        "mock-scripted".into()
    }
}

/// Plays back recorded raw responses; errors once they are used up.
#[derive(Debug, Clone, Default)]
pub struct ReplayProvider {
    queue: VecDeque<String>,
}

impl ReplayProvider {
    pub fn new(responses: impl IntoIterator<Item = String>) -> Self {
        ReplayProvider { queue: responses.into_iter().collect() }
    }

    pub fn remaining(&self) -> usize {
        self.queue.len()
    }
}

impl Provider for ReplayProvider {
    fn complete(&mut self, _messages: &[ChatMessage]) -> Result<String, ProviderError> {
        self.queue.pop_front().ok_or(ProviderError::ReplayExhausted)
    }

    fn name(&self) -> String {
        "replay".into()
    }
}

/// Always fails with the given error.
#[derive(Debug, Clone)]
pub struct FailingProvider(pub ProviderError);

impl Provider for FailingProvider {
    fn complete(&mut self, _messages: &[ChatMessage]) -> Result<String, ProviderError> {
        Err(self.0.clone())
    }

    fn name(&self) -> String {
        "failing".into()
    }
}
