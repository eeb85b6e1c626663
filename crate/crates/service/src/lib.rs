//! Long-running planning jobs: a plain-file job store, a small worker pool,
//! the HTTP API and the pieces of the `synthelite` command line.

pub mod api;
pub mod error;
pub mod job;
pub mod runner;
pub mod service;
pub mod store;

pub use error::ServiceError;
pub use job::{Job, JobStatus};
pub use runner::{add_feedback, new_job, run_job, Engine, JobRequest};
pub use service::{JobService, DEFAULT_WORKERS};
pub use store::JobStore;

/// Serve `svc` on `listener` until ctrl-c, after requeueing interrupted jobs.
pub async fn serve(listener: tokio::net::TcpListener, svc: std::sync::Arc<JobService>) -> std::io::Result<()> {
    let resumed = svc.recover().map_err(std::io::Error::other)?;
    if resumed > 0 {
        log::info!("requeued {resumed} interrupted jobs");
    }
    axum::serve(listener, api::router(svc))
        .with_graceful_shutdown(async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await
}
