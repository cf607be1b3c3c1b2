mod common;

use std::time::Duration;

use oasis_cli::{App, JobKind, JobManager, JobSpec, JobState};
use oasis_core::fixtures::{self, Style};
use serde_json::{json, Value};

fn data_root() -> (tempfile::TempDir, std::path::PathBuf) {
    let dir = tempfile::tempdir().unwrap();
    let root = dir.path().join("data");
    let app = App::open(&root).unwrap();
    let docs = fixtures::documents(Style::Web, 200, 1, "w");
    let input = common::write_jsonl(dir.path(), "web", &docs);
    app.store.ingest(&input, "web", 4096).unwrap();
    (dir, root)
}

fn rule_run(out: &str, min: u64) -> JobSpec {
    JobSpec::parse(
        JobKind::RuleRun,
        json!({
            "corpus": "web",
            "out": out,
            "pipeline": {"name": "p", "cells": [{"kind": "min_word_count", "mode": "drop", "params": {"min": min}}]},
        }),
    )
    .unwrap()
}

fn manager(root: &std::path::Path, workers: usize) -> JobManager {
    JobManager::start(App::open(root).unwrap(), workers).unwrap()
}

#[test]
fn valid_config_is_queued() {
    let (_t, root) = data_root();
    let jobs = manager(&root, 0);
    let (job, fresh) = jobs.submit(rule_run("r1", 10)).unwrap();
    assert!(fresh);
    assert_eq!(job.state, JobState::Queued);
    assert_eq!(job.kind, JobKind::RuleRun);
    assert_eq!(job.resource, "corpus:r1");
    assert_eq!(jobs.list().len(), 1);
}

#[test]
fn missing_field_is_named() {
    let err = JobSpec::parse(JobKind::RuleRun, json!({"corpus": "web"})).unwrap_err();
    assert_eq!(err.code, "schema");
    assert_eq!(err.detail["path"], "config.out");
    assert!(err.message.contains("out"), "{}", err.message);

    let err = JobSpec::parse(JobKind::DedupRun, json!({"corpus": "web", "out": "d", "jaccard_threshold": "high"})).unwrap_err();
    assert_eq!(err.detail["path"], "config.jaccard_threshold");

    let err = JobSpec::parse(
        JobKind::LmTrain,
        json!({"corpus": "web", "out": "m", "lm": {"order": 3, "colour": 1}}),
    )
    .unwrap_err();
    assert!(err.detail["path"].as_str().unwrap().starts_with("config.lm"), "{}", err.detail);
}

#[test]
fn same_config_is_idempotent_and_other_writers_conflict() {
    let (_t, root) = data_root();
    let jobs = manager(&root, 0);
    let (a, _) = jobs.submit(rule_run("r1", 10)).unwrap();
    let (b, fresh) = jobs.submit(rule_run("r1", 10)).unwrap();
    assert!(!fresh);
    assert_eq!(a.id, b.id);
    let err = jobs.submit(rule_run("r1", 20)).unwrap_err();
    assert_eq!(err.status.as_u16(), 409);
    assert_eq!(err.detail["job_id"], a.id, "{}", err.detail);
    // a different output is fine
    assert!(jobs.submit(rule_run("r2", 20)).unwrap().1);
}

#[test]
fn validation_rejects_before_queueing() {
    let (_t, root) = data_root();
    let jobs = manager(&root, 0);
    let missing = JobSpec::parse(
        JobKind::RuleRun,
        json!({"corpus": "nope", "out": "x", "pipeline": {"name": "p", "cells": []}}),
    )
    .unwrap();
    assert_eq!(jobs.submit(missing).unwrap_err().status.as_u16(), 404);
    let unknown = JobSpec::parse(JobKind::RuleRun, json!({"corpus": "web", "out": "p1", "pipeline_id": "pl-1"})).unwrap();
    assert_eq!(jobs.submit(unknown).unwrap_err().status.as_u16(), 404, "unknown pipeline id");
    let bad_threshold = JobSpec::parse(
        JobKind::QualityRun,
        json!({"corpus": "web", "model": "none", "threshold": 2.0, "out": "q"}),
    )
    .unwrap();
    assert_eq!(jobs.submit(bad_threshold).unwrap_err().status.as_u16(), 400);
    assert!(jobs.list().is_empty());
}

#[test]
fn queued_job_cancels_at_once() {
    let (_t, root) = data_root();
    let jobs = manager(&root, 0);
    let (job, _) = jobs.submit(rule_run("r1", 10)).unwrap();
    let after = jobs.cancel(&job.id).unwrap();
    assert_eq!(after.state, JobState::Cancelled);
    assert!(after.finished_at.is_some());
    // the resource is free again
    assert!(jobs.submit(rule_run("r1", 20)).unwrap().1);
    assert_eq!(jobs.cancel("job-999999").unwrap_err().status.as_u16(), 404);
}

#[test]
fn worker_runs_job_to_success() {
    let (_t, root) = data_root();
    let jobs = manager(&root, 1);
    let (job, _) = jobs.submit(rule_run("r1", 70)).unwrap();
    let done = jobs.wait(&job.id, Duration::from_secs(60)).unwrap();
    assert_eq!(done.state, JobState::Succeeded, "{:?}", done.error);
    assert_eq!(done.progress, 1.0);
    assert_eq!(done.output.as_deref(), Some("r1"));
    let kept = jobs.app().store.get("r1").unwrap().doc_count;
    assert!(kept > 0 && kept < 200, "{kept}");
    assert_eq!(done.result.unwrap()["corpus"]["doc_count"], kept);
    assert!(done.log_tail.len() <= 50);
    // finished jobs no longer block the resource; the name is now taken though
    let err = jobs.submit(rule_run("r1", 70)).unwrap_err();
    assert_eq!(err.code, "name_taken");
    jobs.shutdown();
}

#[test]
fn failing_job_records_its_error() {
    let (_t, root) = data_root();
    let jobs = manager(&root, 1);
    let score = JobSpec::parse(JobKind::LmScore, json!({"corpus": "web", "model": "missing"})).unwrap();
    assert_eq!(jobs.submit(score).unwrap_err().status.as_u16(), 404);
    // passes validation, fails while loading the reference model
    let assess = JobSpec::parse(
        JobKind::AssessRun,
        json!({"corpus": "web", "config": {"ppl_model": "models/none.lm"}}),
    )
    .unwrap();
    let (job, _) = jobs.submit(assess).unwrap();
    let done = jobs.wait(&job.id, Duration::from_secs(60)).unwrap();
    assert_eq!(done.state, JobState::Failed);
    let err = done.error.unwrap();
    assert!(!err.code.is_empty() && !err.message.is_empty());
    assert!(done.log_tail.last().unwrap().contains("failed"));
    jobs.shutdown();
}

#[test]
fn restart_fails_running_and_requeues_queued() {
    let (_t, root) = data_root();
    {
        let jobs = manager(&root, 0);
        jobs.submit(rule_run("r1", 10)).unwrap();
        jobs.submit(rule_run("r2", 10)).unwrap();
    }
    // pretend the first job was mid-run when the process died
    let path = root.join("jobs.json");
    let mut file: Value = serde_json::from_slice(&std::fs::read(&path).unwrap()).unwrap();
    file["jobs"][0]["state"] = json!("running");
    std::fs::write(&path, serde_json::to_vec(&file).unwrap()).unwrap();

    let jobs = manager(&root, 0);
    let list = jobs.list();
    assert_eq!(list[0].state, JobState::Failed);
    assert_eq!(list[0].error.as_ref().unwrap().code, "interrupted");
    assert_eq!(list[1].state, JobState::Queued);
    drop(jobs);

    let jobs = manager(&root, 1);
    let done = jobs.wait(&list[1].id, Duration::from_secs(60)).unwrap();
    assert_eq!(done.state, JobState::Succeeded);
    // ids keep counting after a restart
    let (next, _) = jobs.submit(rule_run("r3", 10)).unwrap();
    assert_eq!(next.id, "job-000003");
    jobs.shutdown();
}

#[test]
fn running_job_can_be_cancelled() {
    let dir = tempfile::tempdir().unwrap();
    let root = dir.path().join("data");
    let app = App::open(&root).unwrap();
    let docs = fixtures::documents(Style::Web, 20_000, 2, "w");
    let input = common::write_jsonl(dir.path(), "big", &docs);
    app.store.ingest(&input, "web", 2048).unwrap();
    drop(app);
    let jobs = manager(&root, 1);
    let (job, _) = jobs.submit(rule_run("r1", 10)).unwrap();
    while jobs.get(&job.id).unwrap().state == JobState::Queued {
        std::thread::yield_now();
    }
    let asked = jobs.cancel(&job.id).unwrap();
    let done = jobs.wait(&job.id, Duration::from_secs(120)).unwrap();
    if asked.state == JobState::Running {
        assert!(asked.cancel_requested);
        assert_eq!(done.state, JobState::Cancelled, "{:?}", done.error);
        assert!(jobs.app().store.get("r1").is_err(), "partial output must not be registered");
    } else {
        // the job beat the cancel request
        assert_eq!(done.state, JobState::Succeeded);
    }
    jobs.shutdown();
}
