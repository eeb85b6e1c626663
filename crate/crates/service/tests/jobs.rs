//! Job lifecycle through the in-process service: submission, the worker
//! pool, feedback injection and resumption from persisted attempts.

mod common;

use std::fs;
use std::sync::Arc;

use common::{service, settled, toy_rules, wait_for, Recorder, TOY_TARGET};
use synthelite_core::llm::prompt::neutral_prompt;
use synthelite_core::phase1::run_evaluated_attempt;
use synthelite_core::pipeline::routes_jsonl;
use synthelite_core::{Gateway, PipelineConfig, PlannerConfig, PlannerContext};
use synthelite_service::{new_job, run_job, JobRequest, JobStatus, ServiceError};

fn request(target: &str) -> JobRequest {
    JobRequest { target_smiles: target.into(), ..Default::default() }
}

#[tokio::test(flavor = "multi_thread")]
async fn submitted_job_runs_to_done_and_serves_its_routes() {
    let dir = tempfile::tempdir().unwrap();
    let svc = service(dir.path(), Recorder::new(toy_rules()));
    let (job, created) = svc.submit(request(TOY_TARGET)).unwrap();
    assert!(created);
    assert_eq!(job.status, JobStatus::Queued);
    assert_eq!(job.attempts_done, 0);

    let (done, seen) = wait_for(&svc, &job.id, |j| j.status.is_terminal()).await;
    assert_eq!(done.status, JobStatus::Done, "{:?}", done.error);
    assert_eq!(done.attempts_done, 3);
    for w in seen.windows(2) {
        assert!(w[0].can_become(w[1]), "{seen:?}");
    }

    let routes = svc.routes(&job.id, None).unwrap();
    assert_eq!(routes.len(), done.route_count);
    assert!(routes[0].solved);
    assert_eq!(routes[0].alignment, 1.0);
    let on_disk = fs::read_to_string(svc.store().routes_path(&job.id)).unwrap();
    assert_eq!(routes_jsonl(&routes), on_disk);
    assert_eq!(svc.routes(&job.id, Some(2)).unwrap(), routes[..2]);

    let lines = fs::read_to_string(svc.store().calls_path(&job.id)).unwrap();
    let attempts = svc.store().load_attempts(&job.id).unwrap();
    assert_eq!(lines.lines().count(), attempts.iter().map(|a| a.llm_calls).sum::<usize>());
}

#[tokio::test(flavor = "multi_thread")]
async fn invalid_target_is_rejected_before_any_call() {
    let dir = tempfile::tempdir().unwrap();
    let backend = Recorder::new(toy_rules());
    let svc = service(dir.path(), backend.clone());
    for bad in ["C1CC", "not a molecule", ""] {
        match svc.submit(request(bad)) {
            Err(ServiceError::Validation(msg)) => assert!(msg.contains("target_smiles"), "{msg}"),
            other => panic!("{bad:?}: {other:?}"),
        }
    }
    let bad_config = JobRequest {
        config: Some(PipelineConfig {
            planner: PlannerConfig { attempts: 0, ..Default::default() },
            ..Default::default()
        }),
        ..request(TOY_TARGET)
    };
    assert!(matches!(svc.submit(bad_config), Err(ServiceError::Validation(_))));
    assert_eq!(backend.calls(), 0);
    assert!(svc.list().unwrap().is_empty());
}

#[tokio::test(flavor = "multi_thread")]
async fn omitted_prompt_becomes_the_neutral_prompt() {
    let dir = tempfile::tempdir().unwrap();
    let svc = service(dir.path(), Recorder::new(toy_rules()));
    let (job, _) = svc.submit(request(TOY_TARGET)).unwrap();
    assert_eq!(job.prompt, neutral_prompt());
    assert!(job.prompt.starts_with("Highly feasible synthesis with high overall yields"));
    let blank = JobRequest { prompt: Some("  ".into()), ..request(TOY_TARGET) };
    assert_eq!(svc.submit(blank).unwrap().0.prompt, neutral_prompt());
    let own = JobRequest { prompt: Some("Use a Suzuki coupling late.".into()), ..request(TOY_TARGET) };
    assert_eq!(svc.submit(own).unwrap().0.prompt, "Use a Suzuki coupling late.");
}

#[tokio::test(flavor = "multi_thread")]
async fn dedup_key_returns_the_first_job() {
    let dir = tempfile::tempdir().unwrap();
    let svc = service(dir.path(), Recorder::new(toy_rules()));
    let keyed = || JobRequest { dedup_key: Some("batch-7/case-1".into()), ..request(TOY_TARGET) };
    let (first, created) = svc.submit(keyed()).unwrap();
    assert!(created);
    let (again, created) = svc.submit(keyed()).unwrap();
    assert!(!created);
    assert_eq!(again.id, first.id);
    let (other, _) = svc.submit(request(TOY_TARGET)).unwrap();
    assert_ne!(other.id, first.id);
    assert_eq!(svc.list().unwrap().len(), 2);
}

#[tokio::test(flavor = "multi_thread")]
async fn unknown_job_is_not_found() {
    let dir = tempfile::tempdir().unwrap();
    let svc = service(dir.path(), Recorder::new(toy_rules()));
    for id in ["0000", "../etc", ""] {
        assert!(matches!(svc.get(id), Err(ServiceError::NotFound(_))), "{id}");
        assert!(matches!(svc.routes(id, None), Err(ServiceError::NotFound(_))));
        assert!(matches!(svc.add_feedback(id, "x"), Err(ServiceError::NotFound(_))));
    }
}

#[tokio::test(flavor = "multi_thread")]
async fn user_feedback_reaches_the_next_attempt() {
    let dir = tempfile::tempdir().unwrap();
    let backend = Recorder::new(toy_rules());
    let svc = service(dir.path(), backend.clone());
    let (job, _) = svc.submit(JobRequest { interactive: true, ..request(TOY_TARGET) }).unwrap();

    let (paused, _) = wait_for(&svc, &job.id, settled).await;
    assert_eq!(paused.status, JobStatus::AwaitingFeedback);
    assert_eq!(paused.attempts_done, 1);
    let note = "Avoid palladium if at all possible.";
    assert!(backend.user_texts().iter().all(|t| !t.contains(note)));

    let resumed = svc.add_feedback(&job.id, note).unwrap();
    assert_eq!(resumed.status, JobStatus::Running);
    let first = &svc.store().load_attempts(&job.id).unwrap()[0];
    let fb = first.feedback.as_ref().unwrap();
    // Additive: the model's own critique stays in front of the user's.
    assert!(fb.overall_feedback.contains("strategically different"));
    assert!(fb.overall_feedback.ends_with(&format!("USER: {note}")));

    let (paused, _) = wait_for(&svc, &job.id, |j| settled(j) && j.attempts_done == 2).await;
    assert_eq!(paused.status, JobStatus::AwaitingFeedback);
    let planning: Vec<String> =
        backend.user_texts().into_iter().filter(|t| t.contains("<previous_attempts>")).collect();
    assert!(!planning.is_empty());
    assert!(planning.iter().all(|t| t.contains(&format!("USER: {note}"))));

    // Blank feedback resumes with self-evaluation only.
    svc.add_feedback(&job.id, "   ").unwrap();
    let second = &svc.store().load_attempts(&job.id).unwrap()[1];
    assert!(!second.feedback.as_ref().unwrap().overall_feedback.contains("USER:"));

    let (done, seen) = wait_for(&svc, &job.id, |j| j.status.is_terminal()).await;
    assert_eq!(done.status, JobStatus::Done);
    assert_eq!(done.attempts_done, 3);
    for w in seen.windows(2) {
        assert!(w[0].can_become(w[1]), "{seen:?}");
    }
    match svc.add_feedback(&job.id, "too late") {
        Err(ServiceError::WrongState(msg)) => assert!(msg.contains("done"), "{msg}"),
        other => panic!("{other:?}"),
    }
}

#[tokio::test(flavor = "multi_thread")]
async fn feedback_on_a_queued_or_running_job_is_refused() {
    let dir = tempfile::tempdir().unwrap();
    let svc = service(dir.path(), Recorder::new(toy_rules()));
    let (job, _) = svc.submit(request(TOY_TARGET)).unwrap();
    // Whatever state the worker has reached, it is not awaiting feedback.
    assert!(matches!(svc.add_feedback(&job.id, "x"), Err(ServiceError::WrongState(_))));
    wait_for(&svc, &job.id, |j| j.status.is_terminal()).await;
}

#[test]
fn resumed_job_skips_persisted_attempts_and_matches_a_fresh_run() {
    let fresh_dir = tempfile::tempdir().unwrap();
    let fresh_backend = Recorder::new(toy_rules());
    let fresh = common::engine(fresh_backend.clone());
    let store = synthelite_service::JobStore::open(fresh_dir.path()).unwrap();
    let job = new_job(request(TOY_TARGET)).unwrap();
    store.create(&job).unwrap();
    assert_eq!(run_job(&store, &fresh, &job.id).unwrap(), JobStatus::Done);
    let expected = fs::read_to_string(store.routes_path(&job.id)).unwrap();
    let attempts = store.load_attempts(&job.id).unwrap();

    // A second store where the process died during attempt 2.
    let dir = tempfile::tempdir().unwrap();
    let store = synthelite_service::JobStore::open(dir.path()).unwrap();
    let job = new_job(request(TOY_TARGET)).unwrap();
    store.create(&job).unwrap();
    let warmup = common::engine(Recorder::new(toy_rules()));
    let llm = Gateway::new(warmup.backend.clone());
    let ctx = PlannerContext {
        user_prompt: &job.prompt,
        index: &warmup.index,
        stock: &warmup.stock,
        llm: &llm,
        config: &job.config.planner,
    };
    let target = synthelite_chem::canonicalize(&job.target_smiles).unwrap();
    store.save_attempt(&job.id, &run_evaluated_attempt(&target, &[], &ctx)).unwrap();
    store
        .update(&job.id, |j| {
            j.status = JobStatus::Running;
            j.attempts_done = 1;
            Ok(())
        })
        .unwrap();

    let backend = Recorder::new(toy_rules());
    let engine = common::engine(backend.clone());
    assert_eq!(run_job(&store, &engine, &job.id).unwrap(), JobStatus::Done);
    assert_eq!(fs::read_to_string(store.routes_path(&job.id)).unwrap(), expected);
    assert_eq!(store.load_attempts(&job.id).unwrap(), attempts);
    assert_eq!(backend.calls(), attempts[1].llm_calls + attempts[2].llm_calls);
    assert_eq!(fresh_backend.calls(), attempts.iter().map(|a| a.llm_calls).sum::<usize>());
}

#[test]
fn silent_backend_completes_and_broken_record_fails() {
    let dir = tempfile::tempdir().unwrap();
    let store = synthelite_service::JobStore::open(dir.path()).unwrap();
    let job = new_job(request(TOY_TARGET)).unwrap();
    store.create(&job).unwrap();
    // Planning gets no reply, so every attempt ends before its first step.
    let engine = common::engine(Arc::new(synthelite_core::llm::ScriptedBackend::new(Vec::new())));
    assert_eq!(run_job(&store, &engine, &job.id).unwrap(), JobStatus::Done);
    let attempts = store.load_attempts(&job.id).unwrap();
    assert_eq!(attempts.len(), 3);
    assert!(attempts.iter().all(|a| !a.solved));
    assert!(attempts.iter().all(|a| a.blueprint.steps.is_empty()));
    // The search still runs on the empty blueprints, on fallback templates only.
    let routes = store.load_routes(&job.id).unwrap();
    assert!(!routes.is_empty());
    assert!(routes.iter().all(|r| r.alignment == 0.0));

    // A job record whose target no longer parses fails instead of looping.
    let mut broken = new_job(request(TOY_TARGET)).unwrap();
    broken.target_smiles = "C1CC".into();
    store.create(&broken).unwrap();
    assert_eq!(run_job(&store, &engine, &broken.id).unwrap(), JobStatus::Failed);
    let failed = store.load(&broken.id).unwrap();
    assert_eq!(failed.status, JobStatus::Failed);
    assert!(!failed.error.unwrap().is_empty());
}
