//! Judge backend abstraction and the HTTP chat-completions implementation.

use std::path::Path;
use std::time::Duration;

use serde::{Deserialize, Serialize};

/// Transport-level outcome of one backend call. Schema handling lives in the
/// gateway, not here.
#[derive(Debug)]
pub enum BackendError {
    Transport(String),
    RateLimited { retry_after: Option<Duration> },
}

impl std::fmt::Display for BackendError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            BackendError::Transport(msg) => write!(f, "transport failure: {msg}"),
            BackendError::RateLimited { .. } => write!(f, "rate limited"),
        }
    }
}

/// A judge model endpoint. Implementations must be safe to call from many
/// threads; the gateway enforces the concurrency bound.
pub trait JudgeBackend: Send + Sync {
    fn complete(&self, system_prompt: &str, user_prompt: &str) -> Result<String, BackendError>;

    /// Identifier recorded in report provenance.
    fn id(&self) -> String;
}

/// On-disk backend configuration. Credentials are never stored here: only
/// the name of the environment variable holding them.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BackendConfig {
    pub endpoint: String,
    pub model: String,
    /// Name of the environment variable that holds the API key.
    pub auth_env_var: String,
    #[serde(default)]
    pub temperature: Option<f64>,
}

impl BackendConfig {
    pub fn load(path: &Path) -> Result<Self, String> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| format!("cannot read backend config {}: {e}", path.display()))?;
        serde_json::from_str(&text)
            .map_err(|e| format!("invalid backend config {}: {e}", path.display()))
    }
}

/// OpenAI-style chat-completions backend. Sampling defaults to the most
/// deterministic setting the endpoint allows (temperature 0) unless the
/// config overrides it.
pub struct HttpBackend {
    config: BackendConfig,
    api_key: String,
}

impl HttpBackend {
    pub fn new(config: BackendConfig) -> Result<Self, String> {
        let api_key = std::env::var(&config.auth_env_var).map_err(|_| {
            format!(
                "environment variable {} (named in backend config) is not set",
                config.auth_env_var
            )
        })?;
        Ok(HttpBackend { config, api_key })
    }
}

impl JudgeBackend for HttpBackend {
    fn complete(&self, system_prompt: &str, user_prompt: &str) -> Result<String, BackendError> {
        let body = serde_json::json!({
            "model": self.config.model,
            "temperature": self.config.temperature.unwrap_or(0.0),
            "messages": [
                {"role": "system", "content": system_prompt},
                {"role": "user", "content": user_prompt},
            ],
        });

        let response = ureq::post(&self.config.endpoint)
            .header("Authorization", &format!("Bearer {}", self.api_key))
            .send_json(&body);

        match response {
            Ok(mut resp) => {
                let value: serde_json::Value = resp
                    .body_mut()
                    .read_json()
                    .map_err(|e| BackendError::Transport(format!("bad response body: {e}")))?;
                value["choices"][0]["message"]["content"]
                    .as_str()
                    .map(str::to_string)
                    .ok_or_else(|| {
                        BackendError::Transport("response has no message content".to_string())
                    })
            }
            Err(ureq::Error::StatusCode(429)) => BackendError::rate_limited(),
            Err(e) => Err(BackendError::Transport(e.to_string())),
        }
    }

    fn id(&self) -> String {
        format!("http:{}@{}", self.config.model, self.config.endpoint)
    }
}

impl BackendError {
    fn rate_limited() -> Result<String, BackendError> {
        Err(BackendError::RateLimited { retry_after: None })
    }
}
