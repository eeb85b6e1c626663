//! Job orchestration: submission, a fixed-size worker pool and restart
//! recovery on top of [`JobStore`].

use std::collections::HashMap;
use std::sync::{Arc, Mutex};

use synthelite_core::RouteCandidate;
use tokio::sync::Semaphore;

use crate::error::ServiceError;
use crate::job::{Job, JobStatus};
use crate::runner::{self, new_job, Engine, JobRequest};
use crate::store::JobStore;

pub const DEFAULT_WORKERS: usize = 2;

pub struct JobService {
    store: Arc<JobStore>,
    engine: Arc<Engine>,
    permits: Arc<Semaphore>,
    /// Jobs owned by a worker task; `true` asks it to run the job once more.
    active: Mutex<HashMap<String, bool>>,
    submit_lock: Mutex<()>,
}

impl JobService {
    pub fn new(store: JobStore, engine: Engine, workers: usize) -> Arc<Self> {
        Arc::new(JobService {
            store: Arc::new(store),
            engine: Arc::new(engine),
            permits: Arc::new(Semaphore::new(workers.max(1))),
            active: Mutex::default(),
            submit_lock: Mutex::default(),
        })
    }

    pub fn store(&self) -> &JobStore {
        &self.store
    }

    pub fn engine(&self) -> &Engine {
        &self.engine
    }

    /// Validate, persist and queue. A repeated dedup key returns the job
    /// created first, with `false`.
    pub fn submit(self: &Arc<Self>, req: JobRequest) -> Result<(Job, bool), ServiceError> {
        let job = new_job(req)?;
        let _guard = self.submit_lock.lock().unwrap();
        if let Some(key) = &job.dedup_key {
            if let Some(existing) = self.store.list()?.into_iter().find(|j| j.dedup_key.as_ref() == Some(key)) {
                return Ok((existing, false));
            }
        }
        self.store.create(&job)?;
        log::info!("job {} queued for {}", job.id, job.target_smiles);
        self.dispatch(job.id.clone());
        Ok((job, true))
    }

    pub fn get(&self, id: &str) -> Result<Job, ServiceError> {
        self.store.load(id)
    }

    pub fn list(&self) -> Result<Vec<Job>, ServiceError> {
        self.store.list()
    }

    /// The top `k` ranked routes (all of them without `k`).
    pub fn routes(&self, id: &str, k: Option<usize>) -> Result<Vec<RouteCandidate>, ServiceError> {
        self.store.load(id)?;
        let mut routes = self.store.load_routes(id)?;
        if let Some(k) = k {
            routes.truncate(k);
        }
        Ok(routes)
    }

    pub fn add_feedback(self: &Arc<Self>, id: &str, text: &str) -> Result<Job, ServiceError> {
        let job = runner::add_feedback(&self.store, id, text)?;
        self.dispatch(id.to_string());
        Ok(job)
    }

    /// Requeue everything a previous process left queued or running.
    pub fn recover(self: &Arc<Self>) -> Result<usize, ServiceError> {
        let mut n = 0;
        for job in self.store.list()? {
            if matches!(job.status, JobStatus::Queued | JobStatus::Running) {
                if job.status == JobStatus::Running {
                    self.store.update(&job.id, |j| {
                        j.resumed += 1;
                        Ok(())
                    })?;
                }
                log::info!("resuming job {} ({} attempts on record)", job.id, job.attempts_done);
                self.dispatch(job.id);
                n += 1;
            }
        }
        Ok(n)
    }

    /// Hand `id` to the pool unless a worker already owns it, in which case
    /// that worker runs it again when it finishes. Needs a tokio runtime.
    pub fn dispatch(self: &Arc<Self>, id: String) {
        {
            let mut active = self.active.lock().unwrap();
            if let Some(again) = active.get_mut(&id) {
                *again = true;
                return;
            }
            active.insert(id.clone(), false);
        }
        let svc = self.clone();
        tokio::spawn(async move {
            let _permit = svc.permits.clone().acquire_owned().await.expect("worker pool closed");
            loop {
                let (store, engine, job_id) = (svc.store.clone(), svc.engine.clone(), id.clone());
                let outcome = tokio::task::spawn_blocking(move || runner::run_job(&store, &engine, &job_id)).await;
                match outcome {
                    Ok(Ok(status)) => log::info!("job {id} is now {status:?}"),
                    Ok(Err(e)) => log::error!("job {id}: {e}"),
                    Err(panic) => {
                        log::error!("job {id}: worker panicked: {panic}");
                        let _ = svc.store.update(&id, |j| {
                            j.status = JobStatus::Failed;
                            j.error = Some("worker panicked".into());
                            Ok(())
                        });
                    }
                }
                let mut active = svc.active.lock().unwrap();
                if active.get(&id) == Some(&true) {
                    active.insert(id.clone(), false);
                    continue;
                }
                active.remove(&id);
                break;
            }
        });
    }

    /// Number of jobs currently owned by workers.
    pub fn busy(&self) -> usize {
        self.active.lock().unwrap().len()
    }
}
