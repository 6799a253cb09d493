//! OpenAI-compatible chat-completions client.

use std::time::Duration;

use serde::{Deserialize, Serialize};
use serde_json::json;

use super::{Backend, ChatRequest, Completion, TransportError};

/// Environment variable holding the bearer token, if the endpoint needs one.
pub const API_KEY_ENV: &str = "XPANDIR_API_KEY";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RemoteConfig {
    /// Base URL up to and including the API version, e.g. `http://host:8000/v1`.
    pub base_url: String,
    pub model: String,
    #[serde(default = "default_timeout")]
    pub timeout_secs: u64,
}

fn default_timeout() -> u64 {
    120
}

pub struct RemoteBackend {
    id: String,
    config: RemoteConfig,
    api_key: Option<String>,
    agent: ureq::Agent,
}

impl std::fmt::Debug for RemoteBackend {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("RemoteBackend")
            .field("id", &self.id)
            .field("config", &self.config)
            .field("api_key", &self.api_key.as_ref().map(|_| "<set>"))
            .finish()
    }
}

impl RemoteBackend {
    /// Client for `config`, reading the API key from [`API_KEY_ENV`].
    pub fn new(id: impl Into<String>, config: RemoteConfig) -> Self {
        let api_key = std::env::var(API_KEY_ENV).ok().filter(|k| !k.is_empty());
        Self::with_api_key(id, config, api_key)
    }

    pub fn with_api_key(id: impl Into<String>, config: RemoteConfig, api_key: Option<String>) -> Self {
        let agent = ureq::AgentBuilder::new()
            .timeout(Duration::from_secs(config.timeout_secs))
            .build();
        RemoteBackend {
            id: id.into(),
            config,
            api_key,
            agent,
        }
    }

    pub fn endpoint(&self) -> String {
        format!("{}/chat/completions", self.config.base_url.trim_end_matches('/'))
    }
}

#[derive(Deserialize)]
struct ChatResponse {
    choices: Vec<Choice>,
}

#[derive(Deserialize)]
struct Choice {
    message: Message,
    #[serde(default)]
    finish_reason: Option<String>,
}

#[derive(Deserialize)]
struct Message {
    #[serde(default)]
    content: Option<String>,
}

/// Request body in the chat-completions wire format.
pub fn request_body(model: &str, request: &ChatRequest) -> serde_json::Value {
    let mut body = json!({
        "model": model,
        "messages": [
            { "role": "system", "content": request.system_message },
            { "role": "user", "content": request.user_message },
        ],
        "max_tokens": request.max_new_tokens,
        "temperature": request.temperature,
    });
    if let Some(seed) = request.seed {
        body["seed"] = json!(seed);
    }
    body
}

fn is_transient_status(status: u16) -> bool {
    status == 408 || status == 429 || status >= 500
}

impl Backend for RemoteBackend {
    fn id(&self) -> &str {
        &self.id
    }

    fn complete(&self, request: &ChatRequest) -> Result<Completion, TransportError> {
        let mut call = self
            .agent
            .post(&self.endpoint())
            .set("Content-Type", "application/json");
        if let Some(key) = &self.api_key {
            call = call.set("Authorization", &format!("Bearer {key}"));
        }
        let response = match call.send_json(request_body(&self.config.model, request)) {
            Ok(response) => response,
            Err(ureq::Error::Status(status, response)) => {
                let detail = response.into_string().unwrap_or_default();
                let message = format!("HTTP {status}: {}", detail.trim());
                return Err(if is_transient_status(status) {
                    TransportError::Transient(message)
                } else {
                    TransportError::Rejected(message)
                });
            }
            Err(ureq::Error::Transport(err)) => return Err(TransportError::Transient(err.to_string())),
        };
        let parsed: ChatResponse = response
            .into_json()
            .map_err(|e| TransportError::Transient(format!("unreadable response body: {e}")))?;
        let choice = parsed
            .choices
            .into_iter()
            .next()
            .ok_or_else(|| TransportError::Transient("response has no choices".into()))?;
        Ok(Completion {
            text: choice.message.content.unwrap_or_default(),
            truncated: choice.finish_reason.as_deref() == Some("length"),
            simulated_latency_ms: None,
        })
    }
}
