//! Drives one job from its last persisted attempt to the ranked routes.

use std::path::Path;
use std::sync::Arc;
use std::time::Duration;

use serde::Deserialize;
use synthelite_chem::{canonicalize, Stock};
use synthelite_core::llm::prompt::neutral_prompt;
use synthelite_core::llm::CallLedger;
use synthelite_core::phase1::run_evaluated_attempt;
use synthelite_core::pipeline::search_attempts;
use synthelite_core::{Gateway, LlmBackend, PipelineConfig, PlannerContext, TemplateIndex};

use crate::error::ServiceError;
use crate::job::{now, Job, JobStatus};
use crate::store::JobStore;

/// Everything a worker needs besides the job itself.
pub struct Engine {
    pub index: Arc<TemplateIndex>,
    pub stock: Arc<Stock>,
    pub backend: Arc<dyn LlmBackend>,
    pub retry_budget: u32,
    pub retry_delay: Duration,
}

impl Engine {
    pub fn new(index: TemplateIndex, stock: Stock, backend: Arc<dyn LlmBackend>) -> Self {
        Engine {
            index: Arc::new(index),
            stock: Arc::new(stock),
            backend,
            retry_budget: 3,
            retry_delay: Duration::from_millis(500),
        }
    }

    pub fn with_retry(mut self, budget: u32, delay: Duration) -> Self {
        self.retry_budget = budget;
        self.retry_delay = delay;
        self
    }

    fn gateway(&self, calls: &Path) -> Gateway {
        Gateway::new(self.backend.clone())
            .with_ledger(Arc::new(CallLedger::with_file(calls)))
            .with_retry(self.retry_budget, self.retry_delay)
    }
}

#[derive(Clone, Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct JobRequest {
    pub target_smiles: String,
    #[serde(default)]
    pub prompt: Option<String>,
    #[serde(default)]
    pub config: Option<PipelineConfig>,
    #[serde(default)]
    pub interactive: bool,
    #[serde(default)]
    pub dedup_key: Option<String>,
}

/// Check a request and turn it into a queued job. Nothing is persisted.
pub fn new_job(req: JobRequest) -> Result<Job, ServiceError> {
    let target = canonicalize(req.target_smiles.trim())
        .map_err(|e| ServiceError::Validation(format!("target_smiles: {e}")))?;
    let config = req.config.unwrap_or_default();
    config.validate().map_err(|e| ServiceError::Validation(format!("config: {e}")))?;
    let prompt = match req.prompt {
        Some(p) if !p.trim().is_empty() => p,
        _ => neutral_prompt().to_string(),
    };
    let t = now();
    Ok(Job {
        id: uuid::Uuid::new_v4().to_string(),
        status: JobStatus::Queued,
        target_smiles: target.smiles().to_string(),
        prompt,
        config,
        interactive: req.interactive,
        dedup_key: req.dedup_key.filter(|k| !k.is_empty()),
        attempts_done: 0,
        route_count: 0,
        resumed: 0,
        created_at: t,
        updated_at: t,
        error: None,
    })
}

/// Run `id` until it finishes, fails or pauses for feedback. Completed
/// attempts on disk are reused, so a job interrupted mid-attempt restarts
/// that attempt and nothing earlier.
pub fn run_job(store: &JobStore, engine: &Engine, id: &str) -> Result<JobStatus, ServiceError> {
    let job = store.load(id)?;
    if job.status.is_terminal() || job.status == JobStatus::AwaitingFeedback {
        return Ok(job.status);
    }
    let (_, job) = store.update(id, |j| {
        j.status = JobStatus::Running;
        Ok(())
    })?;
    match drive(store, engine, &job) {
        Ok(status) => Ok(status),
        Err(e) => {
            log::error!("job {id} failed: {e}");
            store.update(id, |j| {
                j.status = JobStatus::Failed;
                j.error = Some(e.to_string());
                Ok(())
            })?;
            Ok(JobStatus::Failed)
        }
    }
}

fn drive(store: &JobStore, engine: &Engine, job: &Job) -> Result<JobStatus, ServiceError> {
    let id = job.id.as_str();
    let target = canonicalize(&job.target_smiles).map_err(|e| ServiceError::Validation(e.to_string()))?;
    let total = job.config.planner.attempts;
    let mut history = store.load_attempts(id)?;
    if history.len() > total {
        return Err(ServiceError::Internal(format!("{} attempts on disk, job allows {total}", history.len())));
    }
    // Killed between saving an attempt and pausing: pause now.
    if job.interactive && history.len() > job.attempts_done && history.len() < total {
        let n = history.len();
        store.update(id, |j| {
            j.attempts_done = n;
            j.status = JobStatus::AwaitingFeedback;
            Ok(())
        })?;
        return Ok(JobStatus::AwaitingFeedback);
    }

    let llm = engine.gateway(&store.calls_path(id));
    let ctx = PlannerContext {
        user_prompt: &job.prompt,
        index: &engine.index,
        stock: &engine.stock,
        llm: &llm,
        config: &job.config.planner,
    };
    while history.len() < total {
        let attempt = run_evaluated_attempt(&target, &history, &ctx);
        log::info!(
            "job {id}: attempt {} stopped ({:?}), solved {}, {} calls",
            attempt.index,
            attempt.stop_reason,
            attempt.solved,
            attempt.llm_calls
        );
        store.save_attempt(id, &attempt)?;
        history.push(attempt);
        let n = history.len();
        let pause = job.interactive && n < total;
        store.update(id, |j| {
            j.attempts_done = n;
            if pause {
                j.status = JobStatus::AwaitingFeedback;
            }
            Ok(())
        })?;
        if pause {
            return Ok(JobStatus::AwaitingFeedback);
        }
    }

    let (routes, stats) = search_attempts(&target, &history, &engine.stock, &engine.index, &job.config.scoring);
    log::info!("job {id}: {} routes from {} searches", routes.len(), stats.len());
    store.save_routes(id, &routes)?;
    store.update(id, |j| {
        j.attempts_done = history.len();
        j.route_count = routes.len();
        j.status = JobStatus::Done;
        Ok(())
    })?;
    Ok(JobStatus::Done)
}

/// Append the user's critique to the latest attempt's feedback and mark the
/// job running again. Blank text resumes with the model's own feedback.
pub fn add_feedback(store: &JobStore, id: &str, text: &str) -> Result<Job, ServiceError> {
    let (_, job) = store.update(id, |j| {
        if j.status != JobStatus::AwaitingFeedback {
            return Err(ServiceError::WrongState(format!(
                "job {id} is {}, feedback is only accepted while awaiting_feedback",
                serde_json::to_value(j.status)?.as_str().unwrap_or_default()
            )));
        }
        let text = text.trim();
        if !text.is_empty() {
            let mut attempts = store.load_attempts(id)?;
            let last = attempts
                .last_mut()
                .ok_or_else(|| ServiceError::Internal(format!("job {id} paused before any attempt")))?;
            let fb = last.feedback.get_or_insert_with(Default::default);
            fb.overall_feedback = if fb.overall_feedback.trim().is_empty() {
                format!("USER: {text}")
            } else {
                format!("{}\nUSER: {text}", fb.overall_feedback)
            };
            store.save_attempt(id, last)?;
        }
        j.status = JobStatus::Running;
        Ok(())
    })?;
    Ok(job)
}
