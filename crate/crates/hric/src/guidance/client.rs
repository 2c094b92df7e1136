//! Chat-completion wire client. This is the only network surface of the
//! artifact: POST {base_url}/chat/completions with system+user messages.

use serde::{Deserialize, Serialize};
use serde_json::json;

use super::{prompt::SYSTEM_SENTENCE, CompletionProvider, GuidanceError};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LlmEndpointConfig {
    pub base_url: String,
    pub model_name: String,
    pub temperature: f64,
    pub top_p: f64,
    pub timeout_s: f64,
    pub max_retries: usize,
    /// Name of the environment variable holding the bearer token; empty
    /// disables the Authorization header.
    pub api_key_env_var: String,
}

impl Default for LlmEndpointConfig {
    fn default() -> Self {
        Self {
            base_url: "http://127.0.0.1:8000/v1".into(),
            model_name: "llama-3.1-8b-instruct".into(),
            temperature: 0.6,
            top_p: 0.9,
            timeout_s: 10.0,
            max_retries: 2,
            api_key_env_var: String::new(),
        }
    }
}

impl LlmEndpointConfig {
    pub fn validate(&self) -> Result<(), GuidanceError> {
        if self.timeout_s <= 0.0 {
            return Err(GuidanceError::Transport(format!(
                "timeout_s must be > 0, got {}",
                self.timeout_s
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Deserialize)]
struct ChatResponse {
    choices: Vec<Choice>,
}

#[derive(Debug, Deserialize)]
struct Choice {
    message: Message,
}

#[derive(Debug, Deserialize)]
struct Message {
    content: Option<String>,
}

pub struct LlmClient {
    config: LlmEndpointConfig,
    http: reqwest::blocking::Client,
}

impl LlmClient {
    pub fn new(config: LlmEndpointConfig) -> Result<Self, GuidanceError> {
        config.validate()?;
        let http = reqwest::blocking::Client::builder()
            .timeout(std::time::Duration::from_secs_f64(config.timeout_s))
            .build()
            .map_err(|e| GuidanceError::Transport(e.to_string()))?;
        Ok(Self { config, http })
    }

    fn attempt(&self, prompt: &str) -> Result<String, GuidanceError> {
        // The prompt's first line is the expert sentence; it rides as the
        // system message, the remainder as the user message.
        let user = prompt.strip_prefix(SYSTEM_SENTENCE).unwrap_or(prompt).trim_start();
        let body = json!({
            "model": self.config.model_name,
            "messages": [
                {"role": "system", "content": SYSTEM_SENTENCE},
                {"role": "user", "content": user},
            ],
            "temperature": self.config.temperature,
            "top_p": self.config.top_p,
        });
        let url = format!("{}/chat/completions", self.config.base_url.trim_end_matches('/'));
        let mut request = self.http.post(&url).json(&body);
        if !self.config.api_key_env_var.is_empty() {
            if let Ok(token) = std::env::var(&self.config.api_key_env_var) {
                request = request.bearer_auth(token);
            }
        }
        let response = request.send().map_err(|e| {
            if e.is_timeout() {
                GuidanceError::Timeout
            } else {
                GuidanceError::Transport(e.to_string())
            }
        })?;
        let status = response.status();
        if !status.is_success() {
            return Err(GuidanceError::HttpStatus(status.as_u16()));
        }
        let parsed: ChatResponse = response
            .json()
            .map_err(|e| GuidanceError::Transport(e.to_string()))?;
        let content = parsed
            .choices
            .first()
            .ok_or(GuidanceError::EmptyCompletion)?
            .message
            .content
            .as_deref()
            .ok_or(GuidanceError::MissingContent)?;
        if content.trim().is_empty() {
            return Err(GuidanceError::EmptyCompletion);
        }
        Ok(content.to_string())
    }
}

impl CompletionProvider for LlmClient {
    fn complete(&self, prompt: &str) -> Result<String, GuidanceError> {
        request_guidance(prompt, self)
    }
}

/// Issue the chat-completion request, retrying transient failures up to
/// `max_retries` additional attempts.
pub fn request_guidance(prompt: &str, client: &LlmClient) -> Result<String, GuidanceError> {
    let mut last_err = GuidanceError::EmptyCompletion;
    for _ in 0..=client.config.max_retries {
        match client.attempt(prompt) {
            Ok(text) => return Ok(text),
            Err(e) => last_err = e,
        }
    }
    Err(last_err)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_non_positive_timeout() {
        let cfg = LlmEndpointConfig {
            timeout_s: 0.0,
            ..LlmEndpointConfig::default()
        };
        assert!(LlmClient::new(cfg).is_err());
    }

    #[test]
    fn default_sampling_params() {
        let cfg = LlmEndpointConfig::default();
        assert_eq!(cfg.temperature, 0.6);
        assert_eq!(cfg.top_p, 0.9);
    }
}
