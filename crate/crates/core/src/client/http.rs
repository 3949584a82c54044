//! HTTP backend speaking the de-facto OpenAI-compatible wire shapes.
//!
//! Two request styles: `completions` posts the prompt string directly,
//! `chat_completions` wraps it as a single user message. Auth is a bearer
//! token read from an environment variable at call time; the variable name
//! is configuration, never the token itself.

use std::time::Duration;

use serde::Deserialize;
use serde_json::json;

use super::{Backend, BackendError, RequestParams};

/// Default environment variable holding the bearer token.
pub const DEFAULT_API_KEY_ENV: &str = "OPENAI_API_KEY";

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum HttpApi {
    Completions,
    ChatCompletions,
}

pub struct HttpBackend {
    id: String,
    base_url: String,
    api: HttpApi,
    api_key_env: String,
    agent: ureq::Agent,
}

impl HttpBackend {
    pub fn new(
        id: impl Into<String>,
        base_url: impl Into<String>,
        api: HttpApi,
        api_key_env: Option<String>,
        timeout: Duration,
    ) -> Self {
        let agent = ureq::Agent::config_builder()
            .http_status_as_error(false)
            .timeout_global(Some(timeout))
            .build()
            .new_agent();
        HttpBackend {
            id: id.into(),
            base_url: base_url.into().trim_end_matches('/').to_string(),
            api,
            api_key_env: api_key_env.unwrap_or_else(|| DEFAULT_API_KEY_ENV.to_string()),
            agent,
        }
    }

    fn endpoint(&self) -> String {
        match self.api {
            HttpApi::Completions => format!("{}/completions", self.base_url),
            HttpApi::ChatCompletions => format!("{}/chat/completions", self.base_url),
        }
    }

    fn body(&self, prompt: &str, params: &RequestParams) -> serde_json::Value {
        let mut body = match self.api {
            HttpApi::Completions => json!({
                "model": params.model,
                "prompt": prompt,
                "temperature": params.temperature,
                "max_tokens": params.max_tokens,
            }),
            HttpApi::ChatCompletions => json!({
                "model": params.model,
                "messages": [{"role": "user", "content": prompt}],
                "temperature": params.temperature,
                "max_tokens": params.max_tokens,
            }),
        };
        if !params.stop.is_empty() {
            body["stop"] = json!(params.stop);
        }
        for (key, value) in &params.extra {
            body[key.as_str()] = value.clone();
        }
        body
    }
}

#[derive(Deserialize)]
struct CompletionsResponse {
    choices: Vec<CompletionChoice>,
}

#[derive(Deserialize)]
struct CompletionChoice {
    #[serde(default)]
    text: Option<String>,
    #[serde(default)]
    message: Option<ChatMessage>,
}

#[derive(Deserialize)]
struct ChatMessage {
    #[serde(default)]
    content: Option<String>,
}

impl Backend for HttpBackend {
    fn id(&self) -> &str {
        &self.id
    }

    fn complete_once(&self, prompt: &str, params: &RequestParams) -> Result<String, BackendError> {
        let token = std::env::var(&self.api_key_env)
            .map_err(|_| BackendError::MissingApiKey(self.api_key_env.clone()))?;
        let response = self
            .agent
            .post(&self.endpoint())
            .header("authorization", &format!("Bearer {token}"))
            .header("content-type", "application/json")
            .send_json(self.body(prompt, params))
            .map_err(|e| BackendError::Transport(e.to_string()))?;

        let status = response.status().as_u16();
        if status == 401 || status == 403 {
            return Err(BackendError::Auth(format!("status {status}")));
        }
        if !(200..300).contains(&status) {
            let body = response
                .into_body()
                .read_to_string()
                .unwrap_or_default()
                .chars()
                .take(512)
                .collect();
            return Err(BackendError::Status { status, body });
        }
        let parsed: CompletionsResponse = response
            .into_body()
            .read_json()
            .map_err(|e| BackendError::Malformed(e.to_string()))?;
        let choice = parsed
            .choices
            .into_iter()
            .next()
            .ok_or_else(|| BackendError::Malformed("response has no choices".into()))?;
        match self.api {
            HttpApi::Completions => choice
                .text
                .ok_or_else(|| BackendError::Malformed("choice has no text".into())),
            HttpApi::ChatCompletions => choice
                .message
                .and_then(|m| m.content)
                .ok_or_else(|| BackendError::Malformed("choice has no message content".into())),
        }
    }
}
