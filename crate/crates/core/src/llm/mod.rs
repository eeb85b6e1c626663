//! Chat-completion gateway: backends, retries, the call ledger and the
//! tagged-output protocol.

mod http;
pub mod parse;
pub mod prompt;
mod ratelimit;
mod scripted;

use std::fs::OpenOptions;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex};
use std::time::{Duration, Instant, SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::LlmError;

pub use http::{AnthropicBackend, OpenAiBackend};
pub use parse::{
    extract_tag, parse_feedback, parse_int_list, parse_plan, parse_stop, wrap_tag, Feedback, PlanStep,
    ProblemStep, SynthesisPlan,
};
pub use prompt::{render, PromptTemplate};
pub use ratelimit::{RateLimited, RateLimiter};
pub use scripted::{ScriptRule, ScriptedBackend};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    System,
    User,
    Assistant,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Message {
    pub role: Role,
    pub content: String,
}

impl Message {
    pub fn system(text: impl Into<String>) -> Self {
        Message { role: Role::System, content: text.into() }
    }

    pub fn user(text: impl Into<String>) -> Self {
        Message { role: Role::User, content: text.into() }
    }

    pub fn assistant(text: impl Into<String>) -> Self {
        Message { role: Role::Assistant, content: text.into() }
    }
}

/// A chat model. Implementations must be safe to call from several threads.
pub trait LlmBackend: Send + Sync {
    fn name(&self) -> &str;
    fn complete(&self, messages: &[Message]) -> Result<String, LlmError>;
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// Hash of the whole conversation as sent to the backend.
pub fn prompt_hash(messages: &[Message]) -> String {
    sha256_hex(&serde_json::to_vec(messages).expect("messages serialize"))
}

/// One line of the run record.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CallRecord {
    pub ts: f64,
    pub backend: String,
    pub prompt_sha256: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub response_sha256: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub tokens: Option<u64>,
    pub latency_ms: u64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

/// Every backend call, kept in memory and optionally appended to a JSONL file.
#[derive(Default)]
pub struct CallLedger {
    records: Mutex<Vec<CallRecord>>,
    file: Option<PathBuf>,
}

impl CallLedger {
    pub fn in_memory() -> Self {
        Self::default()
    }

    pub fn with_file(path: impl Into<PathBuf>) -> Self {
        CallLedger { records: Mutex::default(), file: Some(path.into()) }
    }

    pub fn record(&self, rec: CallRecord) {
        if let Some(path) = &self.file {
            let line = serde_json::to_string(&rec).expect("record serializes");
            let res = OpenOptions::new()
                .create(true)
                .append(true)
                .open(path)
                .and_then(|mut f| writeln!(f, "{line}"));
            if let Err(e) = res {
                log::warn!("cannot append to run record {}: {e}", path.display());
            }
        }
        self.records.lock().unwrap().push(rec);
    }

    pub fn records(&self) -> Vec<CallRecord> {
        self.records.lock().unwrap().clone()
    }

    /// Successful calls only.
    pub fn len(&self) -> usize {
        self.records.lock().unwrap().iter().filter(|r| r.error.is_none()).count()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// A backend plus retry policy and ledger. Cheap to clone.
#[derive(Clone)]
pub struct Gateway {
    backend: Arc<dyn LlmBackend>,
    ledger: Arc<CallLedger>,
    pub retry_budget: u32,
    pub base_delay: Duration,
}

impl Gateway {
    pub fn new(backend: Arc<dyn LlmBackend>) -> Self {
        Gateway {
            backend,
            ledger: Arc::new(CallLedger::in_memory()),
            retry_budget: 3,
            base_delay: Duration::from_millis(500),
        }
    }

    pub fn with_ledger(mut self, ledger: Arc<CallLedger>) -> Self {
        self.ledger = ledger;
        self
    }

    pub fn with_retry(mut self, budget: u32, base_delay: Duration) -> Self {
        self.retry_budget = budget;
        self.base_delay = base_delay;
        self
    }

    pub fn ledger(&self) -> &Arc<CallLedger> {
        &self.ledger
    }

    pub fn backend_name(&self) -> &str {
        self.backend.name()
    }

    pub fn complete(&self, messages: &[Message]) -> Result<String, LlmError> {
        complete(self.backend.as_ref(), messages, self.retry_budget, self.base_delay, &self.ledger)
    }
}

/// Call `backend`, retrying transport failures up to `retry_budget` times
/// with exponential backoff. Every attempt is logged to `ledger`.
pub fn complete(
    backend: &dyn LlmBackend,
    messages: &[Message],
    retry_budget: u32,
    base_delay: Duration,
    ledger: &CallLedger,
) -> Result<String, LlmError> {
    let prompt_sha256 = prompt_hash(messages);
    let mut attempt = 0;
    loop {
        let start = Instant::now();
        let result = backend.complete(messages);
        let latency_ms = start.elapsed().as_millis() as u64;
        let ts = SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs_f64()).unwrap_or(0.0);
        let mut rec = CallRecord {
            ts,
            backend: backend.name().to_string(),
            prompt_sha256: prompt_sha256.clone(),
            response_sha256: None,
            tokens: None,
            latency_ms,
            error: None,
        };
        match result {
            Ok(text) => {
                rec.response_sha256 = Some(sha256_hex(text.as_bytes()));
                ledger.record(rec);
                return Ok(text);
            }
            Err(e) => {
                rec.error = Some(e.to_string());
                ledger.record(rec);
                if attempt >= retry_budget {
                    return Err(match e {
                        LlmError::Backend { .. } => e,
                        other => LlmError::Backend {
                            backend: backend.name().to_string(),
                            msg: other.to_string(),
                        },
                    });
                }
                log::warn!("{} call failed ({e}); retry {}/{retry_budget}", backend.name(), attempt + 1);
                std::thread::sleep(base_delay * 2u32.saturating_pow(attempt));
                attempt += 1;
            }
        }
    }
}

/// Resolve a backend selector: `scripted:FILE`, `openai[:MODEL]` or
/// `anthropic[:MODEL]`. Network backends share a per-provider rate limiter
/// sized by `SYNTHELITE_RPM` (default 50 requests per minute).
pub fn backend_from_spec(spec: &str) -> Result<Arc<dyn LlmBackend>, LlmError> {
    let (kind, arg) = spec.split_once(':').unwrap_or((spec, ""));
    let rpm = std::env::var("SYNTHELITE_RPM").ok().and_then(|v| v.parse().ok()).unwrap_or(50.0);
    match kind {
        "scripted" => Ok(Arc::new(ScriptedBackend::load(Path::new(arg))?)),
        "openai" => {
            let b = OpenAiBackend::from_env(non_empty(arg))?;
            Ok(Arc::new(RateLimited::new(b, RateLimiter::shared("openai", rpm))))
        }
        "anthropic" => {
            let b = AnthropicBackend::from_env(non_empty(arg))?;
            Ok(Arc::new(RateLimited::new(b, RateLimiter::shared("anthropic", rpm))))
        }
        _ => Err(LlmError::Backend {
            backend: spec.to_string(),
            msg: "unknown backend; expected scripted:FILE, openai[:MODEL] or anthropic[:MODEL]".into(),
        }),
    }
}

/// The backend named by `SYNTHELITE_LLM`, if set.
pub fn backend_from_env() -> Result<Option<Arc<dyn LlmBackend>>, LlmError> {
    match std::env::var("SYNTHELITE_LLM") {
        Ok(spec) if !spec.is_empty() => backend_from_spec(&spec).map(Some),
        _ => Ok(None),
    }
}

fn non_empty(s: &str) -> Option<&str> {
    (!s.is_empty()).then_some(s)
}
