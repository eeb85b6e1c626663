//! The JSON API over a real socket.

mod common;

use std::time::{Duration, Instant};

use common::{toy_rules, Recorder, TOY_TARGET};
use serde_json::{json, Value};
use synthelite_core::pipeline::routes_jsonl;
use synthelite_core::RouteCandidate;

struct Server {
    base: String,
    _runtime: tokio::runtime::Runtime,
    _dir: tempfile::TempDir,
}

fn start() -> Server {
    let dir = tempfile::tempdir().unwrap();
    let runtime = tokio::runtime::Builder::new_multi_thread().enable_all().build().unwrap();
    let svc = common::service(dir.path(), Recorder::new(toy_rules()));
    let listener = runtime.block_on(tokio::net::TcpListener::bind("127.0.0.1:0")).unwrap();
    let base = format!("http://{}", listener.local_addr().unwrap());
    runtime.spawn(async move { synthelite_service::serve(listener, svc).await.unwrap() });
    Server { base, _runtime: runtime, _dir: dir }
}

/// Status code and JSON body, for successes and failures alike.
fn call(req: ureq::Request, body: Option<Value>) -> (u16, Value) {
    let res = match body {
        Some(b) => req.send_json(b),
        None => req.call(),
    };
    match res {
        Ok(r) => (r.status(), r.into_json().unwrap()),
        Err(ureq::Error::Status(code, r)) => (code, r.into_json().unwrap()),
        Err(e) => panic!("{e}"),
    }
}

impl Server {
    fn get(&self, path: &str) -> (u16, Value) {
        call(ureq::get(&format!("{}{path}", self.base)), None)
    }

    fn post(&self, path: &str, body: Value) -> (u16, Value) {
        call(ureq::post(&format!("{}{path}", self.base)), Some(body))
    }

    fn wait(&self, id: &str, status: &str) -> Value {
        let start = Instant::now();
        loop {
            let (code, job) = self.get(&format!("/api/jobs/{id}"));
            assert_eq!(code, 200);
            if job["status"] == status {
                return job;
            }
            assert!(start.elapsed() < Duration::from_secs(60), "stuck: {job}");
            std::thread::sleep(Duration::from_millis(20));
        }
    }
}

const STATUSES: [&str; 5] = ["queued", "running", "awaiting_feedback", "done", "failed"];

#[test]
fn health_reports_the_loaded_engine() {
    let s = start();
    let (code, body) = s.get("/api/health");
    assert_eq!(code, 200);
    assert_eq!(body["status"], "ok");
    assert_eq!(body["templates"], 59);
    assert_eq!(body["backend"], "recorder");
}

#[test]
fn job_lifecycle_over_http() {
    let s = start();
    let (code, body) = s.post("/api/jobs", json!({"target_smiles": TOY_TARGET}));
    assert_eq!(code, 201, "{body}");
    let id = body["id"].as_str().unwrap().to_string();
    assert!(STATUSES.contains(&body["status"].as_str().unwrap()));

    let (code, routes) = s.get(&format!("/api/jobs/{id}/routes"));
    assert_eq!(code, 200);
    assert!(routes.is_array());

    let job = s.wait(&id, "done");
    assert_eq!(job["attempts_done"], 3);
    assert_eq!(job["target_smiles"], "CNC(=O)c1ccc(cc1)-c1ccccc1");
    let (_, all) = s.get(&format!("/api/jobs/{id}/routes"));
    let all: Vec<RouteCandidate> = serde_json::from_value(all).unwrap();
    assert_eq!(all.len(), job["route_count"].as_u64().unwrap() as usize);
    assert!(all[0].solved && all[0].alignment == 1.0);
    let on_disk = std::fs::read_to_string(s._dir.path().join("jobs").join(&id).join("routes.jsonl")).unwrap();
    assert_eq!(routes_jsonl(&all), on_disk);

    let (_, top) = s.get(&format!("/api/jobs/{id}/routes?k=3"));
    let top: Vec<RouteCandidate> = serde_json::from_value(top).unwrap();
    assert_eq!(top, all[..3]);

    let (code, list) = s.get("/api/jobs");
    assert_eq!(code, 200);
    assert_eq!(list.as_array().unwrap().len(), 1);

    let (code, err) = s.post(&format!("/api/jobs/{id}/feedback"), json!({"text": "late"}));
    assert_eq!(code, 409);
    assert_eq!(err["code"], "wrong_state");
}

#[test]
fn interactive_job_pauses_and_resumes_on_feedback() {
    let s = start();
    let (_, body) = s.post("/api/jobs", json!({"target_smiles": TOY_TARGET, "interactive": true}));
    let id = body["id"].as_str().unwrap().to_string();
    let job = s.wait(&id, "awaiting_feedback");
    assert_eq!(job["attempts_done"], 1);
    let (code, ack) = s.post(&format!("/api/jobs/{id}/feedback"), json!({"text": "Keep the Suzuki step."}));
    assert_eq!(code, 200, "{ack}");
    assert_eq!(ack["status"], "running");
    s.wait(&id, "awaiting_feedback");
    s.post(&format!("/api/jobs/{id}/feedback"), json!({}));
    s.wait(&id, "done");
}

#[test]
fn errors_carry_code_and_message() {
    let s = start();
    let cases = [
        (s.post("/api/jobs", json!({"target_smiles": "C1CC"})), 400, "validation_error"),
        (s.post("/api/jobs", json!({"smiles": TOY_TARGET})), 400, "validation_error"),
        (s.post("/api/jobs", json!({"target_smiles": TOY_TARGET, "config": {"scoring": {"alpha": 2.0}}})), 400, "validation_error"),
        (s.get("/api/jobs/nope"), 404, "not_found"),
        (s.get("/api/jobs/nope/routes"), 404, "not_found"),
        (s.post("/api/jobs/nope/feedback", json!({"text": "x"})), 404, "not_found"),
    ];
    for ((code, body), want_code, want) in cases {
        assert_eq!(code, want_code, "{body}");
        assert_eq!(body["code"], want);
        assert!(!body["message"].as_str().unwrap().is_empty());
    }
    let (_, body) = s.post("/api/jobs", json!({"target_smiles": TOY_TARGET}));
    let id = body["id"].as_str().unwrap();
    let (code, body) = s.get(&format!("/api/jobs/{id}/routes?k=zero"));
    assert_eq!(code, 400);
    assert_eq!(body["code"], "validation_error");
    let (code, _) = call(ureq::post(&format!("{}/api/jobs", s.base)).set("content-type", "application/json"), None);
    assert_eq!(code, 400);
}

#[test]
fn dedup_key_is_idempotent_over_http() {
    let s = start();
    let req = json!({"target_smiles": TOY_TARGET, "dedup_key": "k1"});
    let (c1, a) = s.post("/api/jobs", req.clone());
    let (c2, b) = s.post("/api/jobs", req);
    assert_eq!((c1, c2), (201, 200));
    assert_eq!(a["id"], b["id"]);
}
