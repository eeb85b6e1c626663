//! Plain-file job records: `jobs/<id>/job.json`, one `attempt_<k>.json` per
//! finished attempt, `routes.jsonl` and the `calls.jsonl` run record.

use std::collections::HashMap;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex};

use synthelite_core::pipeline::{parse_routes_jsonl, routes_jsonl};
use synthelite_core::{AttemptResult, RouteCandidate};

use crate::error::ServiceError;
use crate::job::{now, Job};

pub struct JobStore {
    root: PathBuf,
    locks: Mutex<HashMap<String, Arc<Mutex<()>>>>,
}

/// Write through a sibling temp file, fsync, then rename over the target.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> std::io::Result<()> {
    let mut tmp = path.as_os_str().to_owned();
    tmp.push(".tmp");
    let tmp = PathBuf::from(tmp);
    {
        let mut f = fs::File::create(&tmp)?;
        f.write_all(bytes)?;
        f.sync_all()?;
    }
    fs::rename(&tmp, path)?;
    if let Some(dir) = path.parent() {
        // Persist the rename itself; not every platform allows this.
        let _ = fs::File::open(dir).and_then(|d| d.sync_all());
    }
    Ok(())
}

fn valid_id(id: &str) -> bool {
    !id.is_empty() && id.len() <= 64 && id.bytes().all(|b| b.is_ascii_alphanumeric() || b == b'-')
}

impl JobStore {
    pub fn open(root: impl Into<PathBuf>) -> Result<Self, ServiceError> {
        let root = root.into();
        fs::create_dir_all(root.join("jobs"))?;
        Ok(JobStore { root, locks: Mutex::default() })
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn job_dir(&self, id: &str) -> PathBuf {
        self.root.join("jobs").join(id)
    }

    pub fn calls_path(&self, id: &str) -> PathBuf {
        self.job_dir(id).join("calls.jsonl")
    }

    pub fn routes_path(&self, id: &str) -> PathBuf {
        self.job_dir(id).join("routes.jsonl")
    }

    fn lock_for(&self, id: &str) -> Arc<Mutex<()>> {
        self.locks.lock().unwrap().entry(id.to_string()).or_default().clone()
    }

    pub fn create(&self, job: &Job) -> Result<(), ServiceError> {
        fs::create_dir_all(self.job_dir(&job.id))?;
        self.write_job(job)
    }

    fn write_job(&self, job: &Job) -> Result<(), ServiceError> {
        let bytes = serde_json::to_vec_pretty(job)?;
        write_atomic(&self.job_dir(&job.id).join("job.json"), &bytes)?;
        Ok(())
    }

    pub fn load(&self, id: &str) -> Result<Job, ServiceError> {
        if !valid_id(id) {
            return Err(ServiceError::NotFound(id.to_string()));
        }
        let path = self.job_dir(id).join("job.json");
        let text = match fs::read_to_string(&path) {
            Ok(t) => t,
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => return Err(ServiceError::NotFound(id.to_string())),
            Err(e) => return Err(e.into()),
        };
        Ok(serde_json::from_str(&text)?)
    }

    /// Load, modify and write back under the job's lock. The closure may
    /// refuse the change by returning an error.
    pub fn update<T>(&self, id: &str, f: impl FnOnce(&mut Job) -> Result<T, ServiceError>) -> Result<(T, Job), ServiceError> {
        let lock = self.lock_for(id);
        let _guard = lock.lock().unwrap();
        let mut job = self.load(id)?;
        let before = job.status;
        let out = f(&mut job)?;
        if !before.can_become(job.status) {
            return Err(ServiceError::WrongState(format!("job {id} cannot go from {before:?} to {:?}", job.status)));
        }
        job.updated_at = now();
        self.write_job(&job)?;
        Ok((out, job))
    }

    /// Every readable job, oldest first.
    pub fn list(&self) -> Result<Vec<Job>, ServiceError> {
        let mut jobs = Vec::new();
        for entry in fs::read_dir(self.root.join("jobs"))? {
            let name = entry?.file_name();
            let Some(id) = name.to_str() else { continue };
            match self.load(id) {
                Ok(j) => jobs.push(j),
                Err(ServiceError::NotFound(_)) => {}
                Err(e) => log::warn!("skipping job {id}: {e}"),
            }
        }
        jobs.sort_by(|a, b| a.created_at.total_cmp(&b.created_at).then_with(|| a.id.cmp(&b.id)));
        Ok(jobs)
    }

    pub fn save_attempt(&self, id: &str, attempt: &AttemptResult) -> Result<(), ServiceError> {
        let path = self.job_dir(id).join(format!("attempt_{}.json", attempt.index));
        write_atomic(&path, &serde_json::to_vec_pretty(attempt)?)?;
        Ok(())
    }

    /// The contiguous run attempt_1, attempt_2, ... on disk.
    pub fn load_attempts(&self, id: &str) -> Result<Vec<AttemptResult>, ServiceError> {
        let mut out = Vec::new();
        loop {
            let path = self.job_dir(id).join(format!("attempt_{}.json", out.len() + 1));
            match fs::read_to_string(&path) {
                Ok(text) => out.push(serde_json::from_str(&text)?),
                Err(e) if e.kind() == std::io::ErrorKind::NotFound => return Ok(out),
                Err(e) => return Err(e.into()),
            }
        }
    }

    pub fn save_routes(&self, id: &str, routes: &[RouteCandidate]) -> Result<(), ServiceError> {
        write_atomic(&self.routes_path(id), routes_jsonl(routes).as_bytes())?;
        Ok(())
    }

    /// Empty until the job has finished its search.
    pub fn load_routes(&self, id: &str) -> Result<Vec<RouteCandidate>, ServiceError> {
        match fs::read_to_string(self.routes_path(id)) {
            Ok(text) => parse_routes_jsonl(&text).map_err(|e| ServiceError::Internal(format!("job {id}: routes.jsonl: {e}"))),
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => Ok(Vec::new()),
            Err(e) => Err(e.into()),
        }
    }
}
