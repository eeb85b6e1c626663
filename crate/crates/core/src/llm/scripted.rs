//! Deterministic backend driven by a JSONL ledger of canned responses.

use std::path::Path;
use std::time::Duration;

use serde::{Deserialize, Serialize};

use super::{prompt_hash, LlmBackend, Message, Role};
use crate::error::LlmError;

/// `match` is either `sha256:<hex>` (hash of the whole conversation, as in
/// the run record) or a substring looked up in the last user message.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScriptRule {
    #[serde(rename = "match")]
    pub pattern: String,
    pub response: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub delay_ms: Option<u64>,
}

impl ScriptRule {
    pub fn new(pattern: impl Into<String>, response: impl Into<String>) -> Self {
        ScriptRule { pattern: pattern.into(), response: response.into(), delay_ms: None }
    }

    fn matches(&self, last_user: &str, hash: &str) -> bool {
        match self.pattern.strip_prefix("sha256:") {
            Some(h) => h.eq_ignore_ascii_case(hash),
            None => last_user.contains(&self.pattern),
        }
    }
}

/// First matching rule wins; no state is kept between calls.
#[derive(Clone, Debug, Default)]
pub struct ScriptedBackend {
    rules: Vec<ScriptRule>,
}

impl ScriptedBackend {
    pub fn new(rules: Vec<ScriptRule>) -> Self {
        ScriptedBackend { rules }
    }

    pub fn parse(text: &str, origin: &str) -> Result<Self, LlmError> {
        let mut rules = Vec::new();
        for (i, line) in text.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let rule = serde_json::from_str(line).map_err(|e| LlmError::Script {
                path: origin.to_string(),
                msg: format!("line {}: {e}", i + 1),
            })?;
            rules.push(rule);
        }
        Ok(ScriptedBackend { rules })
    }

    pub fn load(path: &Path) -> Result<Self, LlmError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| LlmError::Script { path: path.display().to_string(), msg: e.to_string() })?;
        Self::parse(&text, &path.display().to_string())
    }

    pub fn push(&mut self, rule: ScriptRule) {
        self.rules.push(rule);
    }

    pub fn rules(&self) -> &[ScriptRule] {
        &self.rules
    }
}

impl LlmBackend for ScriptedBackend {
    fn name(&self) -> &str {
        "scripted"
    }

    fn complete(&self, messages: &[Message]) -> Result<String, LlmError> {
        let last_user = messages.iter().rev().find(|m| m.role == Role::User).map_or("", |m| m.content.as_str());
        let hash = prompt_hash(messages);
        let rule = self
            .rules
            .iter()
            .find(|r| r.matches(last_user, &hash))
            .ok_or(LlmError::NoScriptedMatch(hash))?;
        if let Some(ms) = rule.delay_ms {
            std::thread::sleep(Duration::from_millis(ms));
        }
        Ok(rule.response.clone())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn first_match_by_substring_or_hash() {
        let msgs = [Message::system("sys"), Message::user("describe CCO please")];
        let hash = prompt_hash(&msgs);
        let b = ScriptedBackend::parse(
            &format!(
                "{{\"match\": \"sha256:{hash}\", \"response\": \"by hash\"}}\n{{\"match\": \"CCO\", \"response\": \"by text\"}}\n"
            ),
            "inline",
        )
        .unwrap();
        assert_eq!(b.complete(&msgs).unwrap(), "by hash");
        assert_eq!(b.complete(&[Message::user("CCO")]).unwrap(), "by text");
        assert!(matches!(b.complete(&[Message::user("nothing")]), Err(LlmError::NoScriptedMatch(_))));
    }

    #[test]
    fn system_text_is_not_matched() {
        let b = ScriptedBackend::new(vec![ScriptRule::new("sys", "x")]);
        assert!(b.complete(&[Message::system("sys"), Message::user("u")]).is_err());
    }
}
