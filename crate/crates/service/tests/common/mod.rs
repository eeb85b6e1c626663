#![allow(dead_code)]

use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex};
use std::time::{Duration, Instant};

use synthelite_chem::Stock;
use synthelite_core::index::{describe_templates, load_templates};
use synthelite_core::llm::{ScriptRule, ScriptedBackend};
use synthelite_core::{build_index, Gateway, HashedEmbedder, LlmBackend, LlmError, Message, TemplateIndex};
use synthelite_service::{Engine, Job, JobService, JobStatus, JobStore};

pub const TOY_TARGET: &str = "CNC(=O)c1ccc(-c2ccccc2)cc1";

pub fn toy_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../assets/toy")
}

pub fn toy_stock() -> Stock {
    Stock::load(&toy_dir().join("stock.smi")).unwrap()
}

pub fn toy_rules() -> Vec<ScriptRule> {
    ScriptedBackend::load(&toy_dir().join("llm.jsonl")).unwrap().rules().to_vec()
}

pub fn toy_index() -> TemplateIndex {
    let records = load_templates(&toy_dir().join("templates.jsonl")).unwrap();
    let llm = Gateway::new(Arc::new(ScriptedBackend::new(toy_rules()))).with_retry(0, Duration::ZERO);
    let described = describe_templates(&records, &llm, 4).unwrap();
    build_index(&described, Box::new(HashedEmbedder::default())).unwrap()
}

/// Scripted backend that counts calls and keeps every conversation.
pub struct Recorder {
    inner: ScriptedBackend,
    seen: Mutex<Vec<Vec<Message>>>,
}

impl Recorder {
    pub fn new(rules: Vec<ScriptRule>) -> Arc<Self> {
        Arc::new(Recorder { inner: ScriptedBackend::new(rules), seen: Mutex::default() })
    }

    pub fn calls(&self) -> usize {
        self.seen.lock().unwrap().len()
    }

    /// Every user message sent so far, in order.
    pub fn user_texts(&self) -> Vec<String> {
        self.seen.lock().unwrap().iter().filter_map(|c| c.last()).map(|m| m.content.clone()).collect()
    }
}

impl LlmBackend for Recorder {
    fn name(&self) -> &str {
        "recorder"
    }

    fn complete(&self, messages: &[Message]) -> Result<String, LlmError> {
        self.seen.lock().unwrap().push(messages.to_vec());
        self.inner.complete(messages)
    }
}

pub fn engine(backend: Arc<dyn LlmBackend>) -> Engine {
    Engine::new(toy_index(), toy_stock(), backend).with_retry(0, Duration::ZERO)
}

pub fn service(store: &Path, backend: Arc<dyn LlmBackend>) -> Arc<JobService> {
    JobService::new(JobStore::open(store).unwrap(), engine(backend), 2)
}

/// Poll until `done` holds for the job, recording every distinct status seen.
pub async fn wait_for(svc: &JobService, id: &str, done: impl Fn(&Job) -> bool) -> (Job, Vec<JobStatus>) {
    let start = Instant::now();
    let mut seen: Vec<JobStatus> = Vec::new();
    loop {
        let job = svc.get(id).unwrap();
        if seen.last() != Some(&job.status) {
            seen.push(job.status);
        }
        if done(&job) {
            return (job, seen);
        }
        assert!(start.elapsed() < Duration::from_secs(60), "job {id} stuck in {:?}", job.status);
        tokio::time::sleep(Duration::from_millis(10)).await;
    }
}

pub fn settled(j: &Job) -> bool {
    j.status.is_terminal() || j.status == JobStatus::AwaitingFeedback
}

pub fn bin() -> std::process::Command {
    let mut cmd = std::process::Command::new(env!("CARGO_BIN_EXE_synthelite"));
    cmd.env_remove("SYNTHELITE_LLM").env("RUST_LOG", "warn");
    cmd
}

pub fn scripted(path: &Path) -> String {
    format!("scripted:{}", path.display())
}

/// `synthelite index build` over the toy library into `out`.
pub fn build_index_cli(out: &Path) {
    let status = bin()
        .args(["index", "build", "--templates"])
        .arg(toy_dir().join("templates.jsonl"))
        .arg("--out")
        .arg(out)
        .arg("--llm")
        .arg(scripted(&toy_dir().join("llm.jsonl")))
        .status()
        .unwrap();
    assert!(status.success());
}
