#![allow(dead_code)]

use std::path::Path;
use std::time::{Duration, Instant};

use oasis_cli::{api, App, JobManager};
use oasis_core::{fixtures, Document};
use serde_json::Value;

/// The API served on an ephemeral local port.
pub struct Server {
    pub base: String,
    pub jobs: JobManager,
    agent: ureq::Agent,
    rt: tokio::runtime::Runtime,
}

impl Server {
    pub fn start(root: &Path, workers: usize) -> Server {
        let app = App::open(root).expect("open data root");
        let jobs = JobManager::start(app, workers).expect("start jobs");
        let rt = tokio::runtime::Builder::new_multi_thread()
            .worker_threads(2)
            .enable_all()
            .build()
            .unwrap();
        let listener = rt.block_on(tokio::net::TcpListener::bind("127.0.0.1:0")).unwrap();
        let base = format!("http://{}", listener.local_addr().unwrap());
        let router = api::router(jobs.clone(), None);
        rt.spawn(async move { axum::serve(listener, router).await.unwrap() });
        let agent = ureq::Agent::config_builder().http_status_as_error(false).build().into();
        Server { base, jobs, agent, rt }
    }

    pub fn text(&self, path: &str) -> (u16, String) {
        let mut resp = self.agent.get(&format!("{}{path}", self.base)).call().unwrap();
        (resp.status().as_u16(), resp.body_mut().read_to_string().unwrap())
    }

    pub fn get(&self, path: &str) -> (u16, Value) {
        let (status, body) = self.text(path);
        (status, serde_json::from_str(&body).unwrap_or(Value::Null))
    }

    pub fn post(&self, path: &str, body: &Value) -> (u16, Value) {
        let mut resp = self.agent.post(&format!("{}{path}", self.base)).send_json(body).unwrap();
        let status = resp.status().as_u16();
        let text = resp.body_mut().read_to_string().unwrap();
        (status, serde_json::from_str(&text).unwrap_or(Value::Null))
    }

    /// Submits a job and polls `GET /jobs/{id}` until it finishes, checking
    /// that reported progress never goes backwards.
    pub fn run_job(&self, kind: &str, config: Value) -> Value {
        let (status, job) = self.post("/jobs", &serde_json::json!({ "kind": kind, "config": config }));
        assert!(status == 201 || status == 200, "{kind}: {status} {job}");
        let id = job["id"].as_str().unwrap().to_string();
        let deadline = Instant::now() + Duration::from_secs(600);
        let mut last = 0.0;
        loop {
            let (_, job) = self.get(&format!("/jobs/{id}"));
            let progress = job["progress"].as_f64().unwrap();
            assert!(progress >= last, "{id} progress went from {last} to {progress}");
            last = progress;
            match job["state"].as_str().unwrap() {
                "queued" | "running" => {}
                _ => return job,
            }
            assert!(Instant::now() < deadline, "{id} did not finish");
            std::thread::sleep(Duration::from_millis(20));
        }
    }
}

impl Drop for Server {
    fn drop(&mut self) {
        self.jobs.shutdown();
        let _ = &self.rt;
    }
}

/// Writes `docs` as a JSONL file under `dir` and returns its path.
pub fn write_jsonl(dir: &Path, name: &str, docs: &[Document]) -> String {
    let path = dir.join(format!("{name}.jsonl"));
    std::fs::write(&path, fixtures::to_jsonl(docs)).unwrap();
    path.to_str().unwrap().to_string()
}
