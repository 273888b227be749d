//! Client for OpenAI-compatible chat-completion endpoints.

use std::sync::OnceLock;
use std::time::Duration;

use serde_json::{json, Value};

use crate::predict::{GenerationMessage, PredictorError, TextGenerationPredictor, ENTITY_TEXT_PLACEHOLDER};

pub const DEFAULT_SYSTEM_PROMPT: &str =
    "You extract structured information from scientific text. Answer with a single JSON object.";
pub const DEFAULT_USER_TEMPLATE: &str =
    "List the materials mentioned in the following text as {\"materials\": [...]}:\n\n{entity_text}";

#[derive(Clone)]
pub struct ChatConfig {
    pub endpoint_url: String,
    pub model: String,
    pub api_key: String,
    pub system_prompt: String,
    pub user_prompt_template: String,
    pub temperature: f64,
    pub timeout_s: u64,
}

impl std::fmt::Debug for ChatConfig {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("ChatConfig")
            .field("endpoint_url", &self.endpoint_url)
            .field("model", &self.model)
            .field("api_key", &"<redacted>")
            .field("temperature", &self.temperature)
            .field("timeout_s", &self.timeout_s)
            .finish_non_exhaustive()
    }
}

impl ChatConfig {
    pub fn validate(&self) -> Result<(), String> {
        let n = self.user_prompt_template.matches(ENTITY_TEXT_PLACEHOLDER).count();
        if n != 1 {
            return Err(format!(
                "user_prompt_template must contain {ENTITY_TEXT_PLACEHOLDER} exactly once (found {n})"
            ));
        }
        if self.endpoint_url.is_empty() || self.model.is_empty() {
            return Err("endpoint_url and model are required".into());
        }
        if !self.temperature.is_finite() || self.temperature < 0.0 {
            return Err("temperature must be >= 0".into());
        }
        if self.timeout_s == 0 {
            return Err("timeout_s must be > 0".into());
        }
        Ok(())
    }
}

pub struct ChatCompletionPredictor {
    config: ChatConfig,
    client: OnceLock<Result<reqwest::blocking::Client, String>>,
}

fn excerpt(body: &str) -> String {
    const MAX: usize = 200;
    match body.char_indices().nth(MAX) {
        Some((i, _)) => format!("{}...", &body[..i]),
        None => body.to_string(),
    }
}

impl ChatCompletionPredictor {
    pub fn new(config: ChatConfig) -> Result<Self, String> {
        config.validate()?;
        Ok(Self {
            config,
            client: OnceLock::new(),
        })
    }

    pub fn message_for(&self, entity_text: &str) -> Result<GenerationMessage, String> {
        GenerationMessage::from_template(
            &self.config.system_prompt,
            &self.config.user_prompt_template,
            entity_text,
        )
    }

    /// Request body for `entity_text`; identical inputs give identical bytes.
    pub fn request_body(&self, entity_text: &str) -> Result<Vec<u8>, String> {
        let msg = self.message_for(entity_text)?;
        let body = json!({
            "model": self.config.model,
            "temperature": self.config.temperature,
            "messages": [
                {"role": "system", "content": msg.system},
                {"role": "user", "content": msg.user},
            ],
        });
        Ok(serde_json::to_vec(&body).expect("request body is plain JSON"))
    }

    fn client(&self) -> Result<&reqwest::blocking::Client, PredictorError> {
        self.client
            .get_or_init(|| {
                reqwest::blocking::Client::builder()
                    .timeout(Duration::from_secs(self.config.timeout_s))
                    .build()
                    .map_err(|e| e.to_string())
            })
            .as_ref()
            .map_err(|e| PredictorError::Transport(e.clone()))
    }

    fn url(&self) -> String {
        format!("{}/chat/completions", self.config.endpoint_url.trim_end_matches('/'))
    }

    fn attempt(&self, body: &[u8]) -> Result<String, PredictorError> {
        let resp = self
            .client()?
            .post(self.url())
            .bearer_auth(&self.config.api_key)
            .header(reqwest::header::CONTENT_TYPE, "application/json")
            .body(body.to_vec())
            .send()
            .map_err(|e| {
                if e.is_timeout() {
                    PredictorError::Timeout
                } else {
                    PredictorError::Transport(e.without_url().to_string())
                }
            })?;
        let status = resp.status();
        let text = resp.text().map_err(|e| {
            if e.is_timeout() {
                PredictorError::Timeout
            } else {
                PredictorError::Transport(e.without_url().to_string())
            }
        })?;
        if !status.is_success() {
            return Err(PredictorError::Http {
                status: status.as_u16(),
                body: excerpt(&text),
            });
        }
        let value: Value = serde_json::from_str(&text)
            .map_err(|e| PredictorError::InvalidResponse(format!("response is not JSON: {e}")))?;
        value
            .pointer("/choices/0/message/content")
            .and_then(Value::as_str)
            .map(str::to_string)
            .ok_or_else(|| {
                PredictorError::InvalidResponse("missing choices[0].message.content".into())
            })
    }
}

impl TextGenerationPredictor for ChatCompletionPredictor {
    /// One retry after a timeout or a server error.
    fn generate(&self, entity_text: &str) -> Result<String, PredictorError> {
        let body = self.request_body(entity_text).map_err(PredictorError::Failed)?;
        match self.attempt(&body) {
            Err(PredictorError::Timeout) => self.attempt(&body),
            Err(PredictorError::Http { status, .. }) if status >= 500 => self.attempt(&body),
            other => other,
        }
    }
}
