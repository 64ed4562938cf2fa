use std::sync::Mutex;
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use super::registry::RegistryError;
use super::{FailureKind, Responder};
use crate::prompting::Batch;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RemoteConfig {
    pub endpoint: String,
    pub model: String,
    /// Name of the environment variable holding the bearer token.
    pub api_key_env: Option<String>,
    pub min_interval: Duration,
    pub timeout: Duration,
}

/// Spaces out requests to one endpoint. Callers block until at least
/// `min_interval` has passed since the previous request started.
#[derive(Debug)]
pub struct RateGate {
    min_interval: Duration,
    last: Mutex<Option<Instant>>,
}

impl RateGate {
    pub fn new(min_interval: Duration) -> RateGate {
        RateGate {
            min_interval,
            last: Mutex::new(None),
        }
    }

    pub fn wait(&self) {
        let mut last = self.last.lock().unwrap_or_else(|e| e.into_inner());
        if let Some(prev) = *last {
            let elapsed = prev.elapsed();
            if elapsed < self.min_interval {
                std::thread::sleep(self.min_interval - elapsed);
            }
        }
        *last = Some(Instant::now());
    }
}

/// Single-turn chat-completion request body.
pub fn chat_request_body(model: &str, prompt: &str) -> Value {
    json!({
        "model": model,
        "temperature": 0,
        "messages": [
            { "role": "user", "content": prompt }
        ]
    })
}

/// Pulls the reply text out of a chat-completion (or legacy completion)
/// response.
pub fn extract_chat_content(body: &Value) -> Option<String> {
    let choice = body.get("choices")?.get(0)?;
    choice
        .get("message")
        .and_then(|m| m.get("content"))
        .or_else(|| choice.get("text"))
        .and_then(Value::as_str)
        .map(str::to_string)
}

#[derive(Debug)]
pub struct RemoteResponder {
    config: RemoteConfig,
    client: reqwest::blocking::Client,
    gate: RateGate,
}

impl RemoteResponder {
    pub fn new(config: RemoteConfig) -> Result<RemoteResponder, RegistryError> {
        let client = reqwest::blocking::Client::builder()
            .timeout(config.timeout)
            .build()
            .map_err(|e| RegistryError::Invalid {
                backend_id: config.model.clone(),
                message: format!("cannot build http client: {e}"),
            })?;
        Ok(RemoteResponder {
            gate: RateGate::new(config.min_interval),
            config,
            client,
        })
    }
}

impl Responder for RemoteResponder {
    fn respond(&self, prompt: &str, _batch: &Batch) -> Result<String, FailureKind> {
        let mut request = self
            .client
            .post(&self.config.endpoint)
            .json(&chat_request_body(&self.config.model, prompt));
        if let Some(var) = &self.config.api_key_env {
            let key = std::env::var(var)
                .map_err(|_| FailureKind::Config(format!("environment variable {var} is not set")))?;
            request = request.bearer_auth(key);
        }
        self.gate.wait();
        let response = request
            .send()
            .map_err(|e| FailureKind::Transport(e.to_string()))?;
        let status = response.status();
        let text = response
            .text()
            .map_err(|e| FailureKind::Transport(e.to_string()))?;
        if status.as_u16() == 429 {
            return Err(FailureKind::RateLimited(text));
        }
        if status.is_server_error() {
            return Err(FailureKind::Transport(format!("HTTP {status}: {text}")));
        }
        if !status.is_success() {
            return Err(FailureKind::Rejected(format!("HTTP {status}: {text}")));
        }
        let body: Value = serde_json::from_str(&text)
            .map_err(|e| FailureKind::Transport(format!("invalid JSON reply: {e}")))?;
        extract_chat_content(&body)
            .ok_or_else(|| FailureKind::Transport("reply has no choices[0].message.content".into()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn request_body_shape() {
        let body = chat_request_body("gpt-4", "hello");
        assert_eq!(body["model"], "gpt-4");
        assert_eq!(body["messages"][0]["role"], "user");
        assert_eq!(body["messages"][0]["content"], "hello");
    }

    #[test]
    fn content_extraction() {
        let chat = json!({"choices": [{"message": {"role": "assistant", "content": "id,label\np1,positive"}}]});
        assert_eq!(extract_chat_content(&chat).as_deref(), Some("id,label\np1,positive"));
        let legacy = json!({"choices": [{"text": "p1,neg"}]});
        assert_eq!(extract_chat_content(&legacy).as_deref(), Some("p1,neg"));
        assert_eq!(extract_chat_content(&json!({"error": "x"})), None);
    }

    #[test]
    fn gate_spaces_requests() {
        let gate = RateGate::new(Duration::from_millis(20));
        let start = Instant::now();
        gate.wait();
        gate.wait();
        gate.wait();
        assert!(start.elapsed() >= Duration::from_millis(40));
    }
}
