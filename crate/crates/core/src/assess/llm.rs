//! LLM-as-judge scoring through a chat-completion style endpoint.

use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicBool, AtomicU64, AtomicUsize, Ordering};
use std::sync::{Mutex, OnceLock};
use std::time::Duration;

use regex::Regex;
use serde::{Deserialize, Serialize};

use crate::corpus::{CorpusStore, Document};
use crate::error::{Error, IoContext, Result};
use crate::monitor::Monitor;

pub const DEFAULT_API_KEY_ENV: &str = "OASIS_LLM_API_KEY";
pub const TRANSPORT_ATTEMPTS: u32 = 3;

pub const DEFAULT_PROMPT: &str = "You are rating the quality of a text sample for a language-model training corpus.\n\
Judge it on fluency, readability and coherence, using this scale:\n\
1 = unreadable or spam, 2 = mostly broken, 3 = acceptable with clear flaws, 4 = good, 5 = excellent.\n\
\n\
Text:\n\
<<<\n\
{text}\n\
>>>\n\
\n\
Reply with one short sentence of justification, then a final line of the form `Score: N`.";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PromptTemplate {
    pub id: String,
    /// Must contain `{text}`, replaced by the document text.
    pub template: String,
}

impl Default for PromptTemplate {
    fn default() -> Self {
        PromptTemplate {
            id: "quality-1to5-v1".into(),
            template: DEFAULT_PROMPT.into(),
        }
    }
}

impl PromptTemplate {
    pub fn validate(&self) -> Result<()> {
        if !self.template.contains("{text}") {
            return Err(Error::param("template", "must contain the {text} placeholder"));
        }
        Ok(())
    }

    pub fn render(&self, text: &str) -> String {
        self.template.replace("{text}", text)
    }
}

/// Score from a model reply: the last `Score: N` line if present, else the
/// first standalone integer between 1 and 5.
pub fn parse_score(reply: &str) -> Option<u8> {
    static LINE: OnceLock<Regex> = OnceLock::new();
    static BARE: OnceLock<Regex> = OnceLock::new();
    let line = LINE.get_or_init(|| Regex::new(r"(?im)^\W*score\W*:\s*\**\s*([1-5])\b").unwrap());
    if let Some(c) = line.captures_iter(reply).last() {
        return c[1].parse().ok();
    }
    let bare = BARE.get_or_init(|| Regex::new(r"(?:^|[^\w.])([1-5])(?:$|[^\w.]|\.(?:\s|$))").unwrap());
    bare.captures(reply).and_then(|c| c[1].parse().ok())
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ChatReply {
    pub text: String,
    pub tokens: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum ChatError {
    #[error("transport: {0}")]
    Transport(String),
    #[error("authentication: {0}")]
    Auth(String),
}

pub trait ChatClient: Sync {
    fn model(&self) -> &str;
    fn complete(&self, prompt: &str) -> std::result::Result<ChatReply, ChatError>;
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EndpointConfig {
    /// Base URL; requests go to `{base_url}/chat/completions`.
    pub base_url: String,
    pub model: String,
    #[serde(default = "default_key_env")]
    pub api_key_env: String,
    #[serde(default = "default_timeout")]
    pub timeout_secs: u64,
}

fn default_key_env() -> String {
    DEFAULT_API_KEY_ENV.into()
}

fn default_timeout() -> u64 {
    60
}

pub struct HttpChatClient {
    config: EndpointConfig,
    key: String,
    agent: ureq::Agent,
}

impl HttpChatClient {
    pub fn new(config: EndpointConfig) -> Result<Self> {
        url::Url::parse(&config.base_url).map_err(|e| Error::param("base_url", e.to_string()))?;
        let key = std::env::var(&config.api_key_env)
            .map_err(|_| Error::param("api_key_env", format!("environment variable {} is not set", config.api_key_env)))?;
        let agent = ureq::Agent::config_builder()
            .timeout_global(Some(Duration::from_secs(config.timeout_secs)))
            .http_status_as_error(false)
            .build()
            .into();
        Ok(HttpChatClient { config, key, agent })
    }
}

impl ChatClient for HttpChatClient {
    fn model(&self) -> &str {
        &self.config.model
    }

    fn complete(&self, prompt: &str) -> std::result::Result<ChatReply, ChatError> {
        let url = format!("{}/chat/completions", self.config.base_url.trim_end_matches('/'));
        let body = serde_json::json!({
            "model": self.config.model,
            "temperature": 0,
            "messages": [{"role": "user", "content": prompt}],
        });
        let mut resp = self
            .agent
            .post(&url)
            .header("Authorization", &format!("Bearer {}", self.key))
            .send_json(&body)
            .map_err(|e| ChatError::Transport(e.to_string()))?;
        let status = resp.status().as_u16();
        if status == 401 || status == 403 {
            return Err(ChatError::Auth(format!("HTTP {status}")));
        }
        if status >= 400 {
            return Err(ChatError::Transport(format!("HTTP {status}")));
        }
        let v: serde_json::Value = resp.body_mut().read_json().map_err(|e| ChatError::Transport(e.to_string()))?;
        let text = v["choices"][0]["message"]["content"]
            .as_str()
            .ok_or_else(|| ChatError::Transport("response has no choices[0].message.content".into()))?
            .to_string();
        let tokens = v["usage"]["total_tokens"].as_u64().unwrap_or(0);
        Ok(ChatReply { text, tokens })
    }
}

/// Request budget shared by all workers; each request, retries included,
/// takes one unit.
#[derive(Debug)]
pub struct Budget {
    max: u64,
    used: AtomicU64,
}

impl Budget {
    pub fn new(max_requests: u64) -> Self {
        Budget {
            max: max_requests,
            used: AtomicU64::new(0),
        }
    }

    pub fn try_take(&self) -> bool {
        self.used
            .fetch_update(Ordering::SeqCst, Ordering::SeqCst, |u| (u < self.max).then_some(u + 1))
            .is_ok()
    }

    pub fn used(&self) -> u64 {
        self.used.load(Ordering::SeqCst)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EvalStatus {
    Scored,
    Unparsed,
    Failed,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LlmEvalRecord {
    pub doc_id: String,
    pub corpus: String,
    pub prompt_id: String,
    pub raw_response: String,
    /// Present iff the reply parsed.
    pub score: Option<u8>,
    pub model: String,
    pub cost_tokens: u64,
    pub status: EvalStatus,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct LlmSummary {
    pub mean_score: Option<f64>,
    pub n: u64,
    pub unscored: u64,
    pub failed: u64,
}

pub fn summarize(records: &[LlmEvalRecord]) -> LlmSummary {
    let mut s = LlmSummary::default();
    let mut sum = 0u64;
    for r in records {
        match (r.status, r.score) {
            (EvalStatus::Scored, Some(v)) => {
                s.n += 1;
                sum += v as u64;
            }
            (EvalStatus::Failed, _) => s.failed += 1,
            _ => s.unscored += 1,
        }
    }
    s.mean_score = (s.n > 0).then(|| sum as f64 / s.n as f64);
    s
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EvalOptions {
    /// Requests in flight at once.
    pub max_in_flight: usize,
    /// First retry delay; doubles per transport retry.
    pub backoff_ms: u64,
}

impl Default for EvalOptions {
    fn default() -> Self {
        EvalOptions {
            max_in_flight: 4,
            backoff_ms: 500,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LlmEvalRun {
    pub records: Vec<LlmEvalRecord>,
    pub summary: LlmSummary,
    pub budget_exhausted: bool,
    pub requests: u64,
}

enum Outcome {
    Reply(ChatReply),
    Failed(String),
    OutOfBudget,
}

fn request(client: &dyn ChatClient, prompt: &str, budget: &Budget, opts: &EvalOptions) -> Outcome {
    let mut last = String::new();
    for attempt in 0..TRANSPORT_ATTEMPTS {
        if !budget.try_take() {
            return Outcome::OutOfBudget;
        }
        match client.complete(prompt) {
            Ok(r) => return Outcome::Reply(r),
            Err(e) => {
                last = e.to_string();
                if attempt + 1 < TRANSPORT_ATTEMPTS {
                    std::thread::sleep(Duration::from_millis(opts.backoff_ms << attempt));
                }
            }
        }
    }
    Outcome::Failed(last)
}

fn evaluate_one(
    doc: &Document,
    corpus: &str,
    prompt: &PromptTemplate,
    client: &dyn ChatClient,
    budget: &Budget,
    opts: &EvalOptions,
) -> Option<LlmEvalRecord> {
    let text = prompt.render(&doc.text);
    let mut record = LlmEvalRecord {
        doc_id: doc.id.clone(),
        corpus: corpus.to_string(),
        prompt_id: prompt.id.clone(),
        raw_response: String::new(),
        score: None,
        model: client.model().to_string(),
        cost_tokens: 0,
        status: EvalStatus::Unparsed,
        error: None,
    };
    // one retry when the reply does not parse
    for _ in 0..2 {
        match request(client, &text, budget, opts) {
            Outcome::OutOfBudget => {
                return (!record.raw_response.is_empty()).then_some(record);
            }
            Outcome::Failed(e) => {
                record.status = EvalStatus::Failed;
                record.error = Some(e);
                return Some(record);
            }
            Outcome::Reply(r) => {
                record.cost_tokens += r.tokens;
                record.score = parse_score(&r.text);
                record.raw_response = r.text;
                if record.score.is_some() {
                    record.status = EvalStatus::Scored;
                    return Some(record);
                }
            }
        }
    }
    Some(record)
}

/// Scores `docs` with at most `opts.max_in_flight` concurrent requests.
/// Stops cleanly when the budget runs out; records keep document order.
pub fn llm_evaluate(
    docs: &[Document],
    corpus: &str,
    prompt: &PromptTemplate,
    client: &dyn ChatClient,
    budget: &Budget,
    opts: &EvalOptions,
    monitor: &dyn Monitor,
) -> Result<LlmEvalRun> {
    prompt.validate()?;
    if opts.max_in_flight == 0 {
        return Err(Error::param("max_in_flight", "must be >= 1"));
    }
    let next = AtomicUsize::new(0);
    let done = AtomicUsize::new(0);
    let exhausted = AtomicBool::new(false);
    let cancelled = AtomicBool::new(false);
    let slots: Vec<Mutex<Option<LlmEvalRecord>>> = docs.iter().map(|_| Mutex::new(None)).collect();
    std::thread::scope(|scope| {
        for _ in 0..opts.max_in_flight.min(docs.len().max(1)) {
            scope.spawn(|| loop {
                if exhausted.load(Ordering::SeqCst) {
                    return;
                }
                if monitor.is_cancelled() {
                    cancelled.store(true, Ordering::SeqCst);
                    return;
                }
                let i = next.fetch_add(1, Ordering::SeqCst);
                let Some(doc) = docs.get(i) else { return };
                match evaluate_one(doc, corpus, prompt, client, budget, opts) {
                    Some(r) => *slots[i].lock().unwrap() = Some(r),
                    None => exhausted.store(true, Ordering::SeqCst),
                }
                let d = done.fetch_add(1, Ordering::SeqCst) + 1;
                monitor.progress(d as f64 / docs.len() as f64, &format!("{d}/{} documents", docs.len()));
            });
        }
    });
    if cancelled.load(Ordering::SeqCst) {
        return Err(Error::Cancelled);
    }
    let records: Vec<LlmEvalRecord> = slots.into_iter().filter_map(|m| m.into_inner().unwrap()).collect();
    Ok(LlmEvalRun {
        summary: summarize(&records),
        budget_exhausted: exhausted.load(Ordering::SeqCst),
        requests: budget.used(),
        records,
    })
}

fn log_path(store: &CorpusStore, corpus: &str) -> PathBuf {
    store.root().join("llm").join(format!("{corpus}.jsonl"))
}

pub fn append_records(store: &CorpusStore, corpus: &str, records: &[LlmEvalRecord]) -> Result<()> {
    let path = log_path(store, corpus);
    let dir = path.parent().unwrap();
    std::fs::create_dir_all(dir).at(dir)?;
    let mut f = OpenOptions::new().create(true).append(true).open(&path).at(&path)?;
    for r in records {
        let mut line = serde_json::to_vec(r)?;
        line.push(b'\n');
        f.write_all(&line).at(&path)?;
    }
    Ok(())
}

/// Every stored record for `corpus`; empty if it was never evaluated.
pub fn load_records(store: &CorpusStore, corpus: &str) -> Result<Vec<LlmEvalRecord>> {
    read_records(&log_path(store, corpus))
}

pub fn read_records(path: &Path) -> Result<Vec<LlmEvalRecord>> {
    let f = match File::open(path) {
        Ok(f) => f,
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => return Ok(Vec::new()),
        Err(e) => return Err(Error::io(path, e)),
    };
    let mut out = Vec::new();
    for line in BufReader::new(f).lines() {
        let line = line.at(path)?;
        if !line.trim().is_empty() {
            out.push(serde_json::from_str(&line)?);
        }
    }
    Ok(out)
}
