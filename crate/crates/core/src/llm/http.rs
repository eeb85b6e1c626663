//! HTTP adapters for hosted chat models. Credentials come from the
//! environment: `OPENAI_API_KEY` (+ optional `OPENAI_BASE_URL`) and
//! `ANTHROPIC_API_KEY` (+ optional `ANTHROPIC_BASE_URL`).

use std::time::Duration;

use serde_json::{json, Value};

use super::{LlmBackend, Message, Role};
use crate::error::LlmError;

fn env_key(var: &str, backend: &str) -> Result<String, LlmError> {
    std::env::var(var).map_err(|_| LlmError::Backend { backend: backend.into(), msg: format!("{var} is not set") })
}

fn agent() -> ureq::Agent {
    ureq::AgentBuilder::new().timeout(Duration::from_secs(600)).build()
}

fn post(backend: &str, req: ureq::Request, body: Value) -> Result<Value, LlmError> {
    let fail = |msg: String| LlmError::Backend { backend: backend.into(), msg };
    match req.send_json(body) {
        Ok(resp) => resp.into_json::<Value>().map_err(|e| fail(e.to_string())),
        Err(ureq::Error::Status(code, resp)) => {
            let text = resp.into_string().unwrap_or_default();
            Err(fail(format!("HTTP {code}: {text}")))
        }
        Err(e) => Err(fail(e.to_string())),
    }
}

pub struct OpenAiBackend {
    agent: ureq::Agent,
    base_url: String,
    key: String,
    model: String,
}

impl OpenAiBackend {
    pub fn from_env(model: Option<&str>) -> Result<Self, LlmError> {
        Ok(OpenAiBackend {
            agent: agent(),
            base_url: std::env::var("OPENAI_BASE_URL").unwrap_or_else(|_| "https://api.openai.com/v1".into()),
            key: env_key("OPENAI_API_KEY", "openai")?,
            model: model.unwrap_or("gpt-5").to_string(),
        })
    }
}

impl LlmBackend for OpenAiBackend {
    fn name(&self) -> &str {
        "openai"
    }

    fn complete(&self, messages: &[Message]) -> Result<String, LlmError> {
        let body = json!({ "model": self.model, "messages": messages });
        let req = self
            .agent
            .post(&format!("{}/chat/completions", self.base_url.trim_end_matches('/')))
            .set("Authorization", &format!("Bearer {}", self.key));
        let v = post("openai", req, body)?;
        v["choices"][0]["message"]["content"]
            .as_str()
            .map(str::to_string)
            .ok_or_else(|| LlmError::Backend { backend: "openai".into(), msg: format!("unexpected reply: {v}") })
    }
}

pub struct AnthropicBackend {
    agent: ureq::Agent,
    base_url: String,
    key: String,
    model: String,
}

impl AnthropicBackend {
    pub fn from_env(model: Option<&str>) -> Result<Self, LlmError> {
        Ok(AnthropicBackend {
            agent: agent(),
            base_url: std::env::var("ANTHROPIC_BASE_URL").unwrap_or_else(|_| "https://api.anthropic.com".into()),
            key: env_key("ANTHROPIC_API_KEY", "anthropic")?,
            model: model.unwrap_or("claude-sonnet-4-5").to_string(),
        })
    }
}

impl LlmBackend for AnthropicBackend {
    fn name(&self) -> &str {
        "anthropic"
    }

    fn complete(&self, messages: &[Message]) -> Result<String, LlmError> {
        let system: Vec<&str> =
            messages.iter().filter(|m| m.role == Role::System).map(|m| m.content.as_str()).collect();
        let turns: Vec<&Message> = messages.iter().filter(|m| m.role != Role::System).collect();
        let body = json!({
            "model": self.model,
            "max_tokens": 8192,
            "system": system.join("\n\n"),
            "messages": turns,
        });
        let req = self
            .agent
            .post(&format!("{}/v1/messages", self.base_url.trim_end_matches('/')))
            .set("x-api-key", &self.key)
            .set("anthropic-version", "2023-06-01");
        let v = post("anthropic", req, body)?;
        let text: String = v["content"]
            .as_array()
            .map(|blocks| blocks.iter().filter_map(|b| b["text"].as_str()).collect())
            .unwrap_or_default();
        if text.is_empty() {
            return Err(LlmError::Backend { backend: "anthropic".into(), msg: format!("unexpected reply: {v}") });
        }
        Ok(text)
    }
}
