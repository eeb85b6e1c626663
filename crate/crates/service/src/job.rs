use std::time::{SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};
use synthelite_core::PipelineConfig;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum JobStatus {
    Queued,
    Running,
    AwaitingFeedback,
    Done,
    Failed,
}

impl JobStatus {
    pub fn is_terminal(self) -> bool {
        matches!(self, JobStatus::Done | JobStatus::Failed)
    }

    /// queued -> running -> (awaiting_feedback -> running)* -> done | failed
    pub fn can_become(self, next: JobStatus) -> bool {
        use JobStatus::*;
        self == next
            || matches!(
                (self, next),
                (Queued, Running)
                    | (Queued, Failed)
                    | (Running, AwaitingFeedback)
                    | (Running, Done)
                    | (Running, Failed)
                    | (AwaitingFeedback, Running)
            )
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Job {
    pub id: String,
    pub status: JobStatus,
    /// Canonical SMILES.
    pub target_smiles: String,
    pub prompt: String,
    pub config: PipelineConfig,
    pub interactive: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dedup_key: Option<String>,
    pub attempts_done: usize,
    #[serde(default)]
    pub route_count: usize,
    /// Times a worker picked the job up again after a restart.
    #[serde(default)]
    pub resumed: u32,
    pub created_at: f64,
    pub updated_at: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

pub fn now() -> f64 {
    SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs_f64()).unwrap_or(0.0)
}
