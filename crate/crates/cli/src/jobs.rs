//! In-process background job runner.
//!
//! Jobs live in `jobs.json` under the data root. A fixed set of worker
//! threads takes queued jobs in submission order. Each job declares the one
//! resource it writes, and at most one live (queued or running) job may
//! hold a given resource.

use std::collections::{BTreeMap, VecDeque};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::PathBuf;
use std::str::FromStr;
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::{Arc, Condvar, Mutex, MutexGuard};
use std::thread::JoinHandle;
use std::time::{Duration, Instant};

use axum::http::StatusCode;
use oasis_core::Monitor;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::error::{ApiError, ApiResult};
use crate::exec::JobSpec;
use crate::layout::JOBS_FILE;
use crate::App;

const LOG_TAIL: usize = 50;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum JobKind {
    RuleRun,
    LmTrain,
    LmScore,
    QualityBuild,
    QualityTrain,
    QualityRun,
    DedupRun,
    AssessRun,
    LlmEval,
}

impl JobKind {
    pub const ALL: [JobKind; 9] = [
        JobKind::RuleRun,
        JobKind::LmTrain,
        JobKind::LmScore,
        JobKind::QualityBuild,
        JobKind::QualityTrain,
        JobKind::QualityRun,
        JobKind::DedupRun,
        JobKind::AssessRun,
        JobKind::LlmEval,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            JobKind::RuleRun => "rule_run",
            JobKind::LmTrain => "lm_train",
            JobKind::LmScore => "lm_score",
            JobKind::QualityBuild => "quality_build",
            JobKind::QualityTrain => "quality_train",
            JobKind::QualityRun => "quality_run",
            JobKind::DedupRun => "dedup_run",
            JobKind::AssessRun => "assess_run",
            JobKind::LlmEval => "llm_eval",
        }
    }
}

impl FromStr for JobKind {
    type Err = ApiError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        JobKind::ALL
            .into_iter()
            .find(|k| k.as_str() == s)
            .ok_or_else(|| ApiError::bad_request("kind", format!("unknown job kind `{s}`")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum JobState {
    Queued,
    Running,
    Succeeded,
    Failed,
    Cancelled,
}

impl JobState {
    pub fn is_live(self) -> bool {
        matches!(self, JobState::Queued | JobState::Running)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Job {
    pub id: String,
    pub kind: JobKind,
    pub state: JobState,
    /// In `[0, 1)` while running, 1 after success.
    pub progress: f64,
    pub config_hash: String,
    pub config: Value,
    /// Resource this job writes, e.g. `corpus:rule_v1`.
    pub resource: String,
    /// Name of the produced artifact once the job succeeded.
    #[serde(default)]
    pub output: Option<String>,
    #[serde(default)]
    pub result: Option<Value>,
    #[serde(default)]
    pub error: Option<ApiError>,
    #[serde(default)]
    pub log_tail: Vec<String>,
    #[serde(default)]
    pub cancel_requested: bool,
    pub created_at: String,
    #[serde(default)]
    pub started_at: Option<String>,
    #[serde(default)]
    pub finished_at: Option<String>,
}

impl Job {
    fn log(&mut self, line: impl Into<String>) {
        self.log_tail.push(format!("{} {}", now(), line.into()));
        if self.log_tail.len() > LOG_TAIL {
            let excess = self.log_tail.len() - LOG_TAIL;
            self.log_tail.drain(..excess);
        }
    }

    fn finish(&mut self, state: JobState) {
        debug_assert!(self.state.is_live() && !state.is_live());
        self.state = state;
        self.finished_at = Some(now());
    }
}

fn now() -> String {
    chrono::Utc::now().to_rfc3339_opts(chrono::SecondsFormat::Millis, true)
}

#[derive(Debug, Default, Serialize, Deserialize)]
struct JobsFile {
    version: u32,
    jobs: Vec<Job>,
}

#[derive(Default)]
struct State {
    jobs: BTreeMap<String, Job>,
    queue: VecDeque<String>,
    cancel: BTreeMap<String, Arc<AtomicBool>>,
    next_id: u64,
}

struct Inner {
    app: Arc<App>,
    path: PathBuf,
    state: Mutex<State>,
    /// Signalled when a job is queued or shutdown starts.
    work: Condvar,
    /// Signalled whenever a job changes.
    changed: Condvar,
    shutdown: AtomicBool,
}

impl Inner {
    fn persist(&self, state: &State) -> ApiResult<()> {
        let file = JobsFile {
            version: 1,
            jobs: state.jobs.values().cloned().collect(),
        };
        let tmp = self.path.with_extension("json.tmp");
        let body = serde_json::to_vec_pretty(&file).map_err(oasis_core::Error::from)?;
        std::fs::write(&tmp, body).map_err(|e| oasis_core::Error::io(&tmp, e))?;
        std::fs::rename(&tmp, &self.path).map_err(|e| oasis_core::Error::io(&self.path, e))?;
        Ok(())
    }

    fn persist_or_log(&self, state: &State) {
        if let Err(e) = self.persist(state) {
            log::error!("could not persist jobs: {e}");
        }
    }
}

/// Handle to the job runner; cheap to clone.
#[derive(Clone)]
pub struct JobManager {
    inner: Arc<Inner>,
    workers: Arc<Mutex<Vec<JoinHandle<()>>>>,
}

struct JobMonitor {
    inner: Arc<Inner>,
    id: String,
    cancel: Arc<AtomicBool>,
}

impl Monitor for JobMonitor {
    fn progress(&self, fraction: f64, message: &str) {
        let mut st = self.inner.state.lock().unwrap();
        if let Some(job) = st.jobs.get_mut(&self.id) {
            if job.state == JobState::Running {
                job.progress = job.progress.max(fraction.clamp(0.0, 0.99));
                job.log(message);
            }
        }
        self.inner.persist_or_log(&st);
        self.inner.changed.notify_all();
    }

    fn is_cancelled(&self) -> bool {
        self.cancel.load(Ordering::SeqCst)
    }
}

impl JobManager {
    /// Loads the job table and starts `workers` threads. Jobs that were
    /// running when the previous process stopped are marked failed; queued
    /// jobs stay queued. With zero workers nothing is executed.
    pub fn start(app: Arc<App>, workers: usize) -> ApiResult<Self> {
        let path = app.store.root().join(JOBS_FILE);
        let mut state = State::default();
        if path.exists() {
            let bytes = std::fs::read(&path).map_err(|e| oasis_core::Error::io(&path, e))?;
            let file: JobsFile = serde_json::from_slice(&bytes).map_err(oasis_core::Error::from)?;
            for mut job in file.jobs {
                match job.state {
                    JobState::Running => {
                        job.error = Some(ApiError::new(
                            StatusCode::INTERNAL_SERVER_ERROR,
                            "interrupted",
                            "the service stopped while the job was running",
                            Value::Null,
                        ));
                        job.log("marked failed after restart");
                        job.finish(JobState::Failed);
                    }
                    JobState::Queued => state.queue.push_back(job.id.clone()),
                    _ => {}
                }
                let n = job.id.strip_prefix("job-").and_then(|n| n.parse::<u64>().ok()).unwrap_or(0);
                state.next_id = state.next_id.max(n);
                state.jobs.insert(job.id.clone(), job);
            }
        }
        let inner = Arc::new(Inner {
            app,
            path,
            state: Mutex::new(state),
            work: Condvar::new(),
            changed: Condvar::new(),
            shutdown: AtomicBool::new(false),
        });
        inner.persist(&inner.state.lock().unwrap())?;
        let handles = (0..workers)
            .map(|i| {
                let inner = inner.clone();
                std::thread::Builder::new()
                    .name(format!("oasis-job-{i}"))
                    .spawn(move || worker(inner))
                    .expect("spawn worker")
            })
            .collect();
        Ok(JobManager {
            inner,
            workers: Arc::new(Mutex::new(handles)),
        })
    }

    pub fn app(&self) -> &Arc<App> {
        &self.inner.app
    }

    fn lock(&self) -> MutexGuard<'_, State> {
        self.inner.state.lock().unwrap()
    }

    /// Queues `spec`. An identical config already queued or running is
    /// returned as is, with `false`; a different live job writing the same
    /// resource is a conflict.
    pub fn submit(&self, spec: JobSpec) -> ApiResult<(Job, bool)> {
        let spec = spec.resolve(&self.inner.app)?;
        let hash = spec.config_hash();
        let resource = spec.output();
        let mut st = self.lock();
        if let Some(j) = st.jobs.values().find(|j| j.state.is_live() && j.config_hash == hash) {
            return Ok((j.clone(), false));
        }
        if let Some(j) = st.jobs.values().find(|j| j.state.is_live() && j.resource == resource) {
            return Err(ApiError::write_conflict(&resource, &j.id));
        }
        spec.validate(&self.inner.app)?;
        st.next_id += 1;
        let mut job = Job {
            id: format!("job-{:06}", st.next_id),
            kind: spec.kind(),
            state: JobState::Queued,
            progress: 0.0,
            config_hash: hash,
            config: spec.config(),
            resource,
            output: None,
            result: None,
            error: None,
            log_tail: Vec::new(),
            cancel_requested: false,
            created_at: now(),
            started_at: None,
            finished_at: None,
        };
        job.log("queued");
        st.queue.push_back(job.id.clone());
        st.jobs.insert(job.id.clone(), job.clone());
        self.inner.persist(&st)?;
        self.inner.work.notify_one();
        self.inner.changed.notify_all();
        Ok((job, true))
    }

    pub fn get(&self, id: &str) -> ApiResult<Job> {
        self.lock()
            .jobs
            .get(id)
            .cloned()
            .ok_or_else(|| ApiError::not_found(format!("job `{id}`")))
    }

    pub fn list(&self) -> Vec<Job> {
        self.lock().jobs.values().cloned().collect()
    }

    /// A queued job is cancelled at once. A running job is asked to stop at
    /// its next shard boundary; its partial outputs are discarded.
    pub fn cancel(&self, id: &str) -> ApiResult<Job> {
        let mut st = self.lock();
        let flag = st.cancel.get(id).cloned();
        let job = st.jobs.get_mut(id).ok_or_else(|| ApiError::not_found(format!("job `{id}`")))?;
        match job.state {
            JobState::Queued => {
                job.log("cancelled before start");
                job.finish(JobState::Cancelled);
            }
            JobState::Running => {
                job.cancel_requested = true;
                job.log("cancel requested");
                if let Some(f) = flag {
                    f.store(true, Ordering::SeqCst);
                }
            }
            _ => {}
        }
        let job = job.clone();
        st.queue.retain(|q| q != id);
        self.inner.persist(&st)?;
        self.inner.changed.notify_all();
        Ok(job)
    }

    /// Blocks until the job leaves the live states or `timeout` passes.
    pub fn wait(&self, id: &str, timeout: Duration) -> ApiResult<Job> {
        let deadline = Instant::now() + timeout;
        let mut st = self.lock();
        loop {
            let job = st.jobs.get(id).ok_or_else(|| ApiError::not_found(format!("job `{id}`")))?;
            let left = deadline.saturating_duration_since(Instant::now());
            if !job.state.is_live() || left.is_zero() {
                return Ok(job.clone());
            }
            st = self.inner.changed.wait_timeout(st, left).unwrap().0;
        }
    }

    /// Stops the workers after their current jobs.
    pub fn shutdown(&self) {
        self.inner.shutdown.store(true, Ordering::SeqCst);
        self.inner.work.notify_all();
        for h in self.workers.lock().unwrap().drain(..) {
            let _ = h.join();
        }
    }
}

fn worker(inner: Arc<Inner>) {
    loop {
        let (id, spec, cancel) = {
            let mut st = inner.state.lock().unwrap();
            let id = loop {
                if inner.shutdown.load(Ordering::SeqCst) {
                    return;
                }
                match st.queue.pop_front() {
                    Some(id) => break id,
                    None => st = inner.work.wait(st).unwrap(),
                }
            };
            let Some(job) = st.jobs.get_mut(&id) else { continue };
            if job.state != JobState::Queued {
                continue;
            }
            let spec = match JobSpec::parse(job.kind, job.config.clone()) {
                Ok(s) => s,
                Err(e) => {
                    job.error = Some(e);
                    job.finish(JobState::Failed);
                    inner.persist_or_log(&st);
                    inner.changed.notify_all();
                    continue;
                }
            };
            job.state = JobState::Running;
            job.started_at = Some(now());
            job.log("started");
            let cancel = Arc::new(AtomicBool::new(false));
            st.cancel.insert(id.clone(), cancel.clone());
            inner.persist_or_log(&st);
            inner.changed.notify_all();
            (id, spec, cancel)
        };

        let monitor = JobMonitor {
            inner: inner.clone(),
            id: id.clone(),
            cancel,
        };
        let outcome = catch_unwind(AssertUnwindSafe(|| spec.execute(&inner.app, &monitor))).unwrap_or_else(|panic| {
            let msg = panic
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| panic.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_else(|| "job panicked".into());
            Err(ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, "panic", msg, Value::Null))
        });

        let mut st = inner.state.lock().unwrap();
        st.cancel.remove(&id);
        if let Some(job) = st.jobs.get_mut(&id) {
            match outcome {
                Ok((output, result)) => {
                    job.progress = 1.0;
                    job.output = Some(output);
                    job.result = Some(result);
                    job.log("succeeded");
                    job.finish(JobState::Succeeded);
                }
                Err(e) if e.code == "cancelled" => {
                    job.log("cancelled; partial output discarded");
                    job.finish(JobState::Cancelled);
                }
                Err(e) => {
                    job.log(format!("failed: {e}"));
                    job.error = Some(e);
                    job.finish(JobState::Failed);
                }
            }
        }
        inner.persist_or_log(&st);
        inner.changed.notify_all();
    }
}

/// Request body of `POST /jobs`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct JobRequest {
    pub kind: String,
    #[serde(default = "empty_object")]
    pub config: Value,
}

fn empty_object() -> Value {
    json!({})
}

impl JobRequest {
    pub fn into_spec(self) -> ApiResult<JobSpec> {
        JobSpec::parse(self.kind.parse()?, self.config)
    }
}
