//! Human High/Low ratings kept as an append-only JSONL log.

use std::collections::HashMap;
use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};
use std::sync::Mutex;

use serde::{Deserialize, Serialize};

use crate::corpus::CorpusStore;
use crate::error::{Error, IoContext, Result};

/// Log file name under the data root.
pub const RATINGS_FILE: &str = "ratings.jsonl";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Rating {
    #[serde(alias = "high")]
    High,
    #[serde(alias = "low")]
    Low,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RatingRecord {
    pub doc_id: String,
    pub corpus: String,
    pub rating: Rating,
    pub rater: String,
    /// RFC 3339; filled in on write when empty.
    #[serde(default)]
    pub timestamp: String,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct RatingSummary {
    pub high: u64,
    pub low: u64,
    /// `high / (high + low)`; `None` without ratings.
    pub high_rate: Option<f64>,
}

/// Latest record per (rater, corpus, doc), in first-rated order.
pub fn active(log: &[RatingRecord]) -> Vec<&RatingRecord> {
    let mut slot: HashMap<(&str, &str, &str), usize> = HashMap::new();
    let mut out: Vec<&RatingRecord> = Vec::new();
    for r in log {
        let key = (r.rater.as_str(), r.corpus.as_str(), r.doc_id.as_str());
        match slot.get(&key) {
            Some(&i) => out[i] = r,
            None => {
                slot.insert(key, out.len());
                out.push(r);
            }
        }
    }
    out
}

/// Fold over the active records, optionally restricted to a corpus and rater.
pub fn summarize(log: &[RatingRecord], corpus: Option<&str>, rater: Option<&str>) -> RatingSummary {
    let mut s = RatingSummary::default();
    for r in active(log) {
        if corpus.is_some_and(|c| c != r.corpus) || rater.is_some_and(|x| x != r.rater) {
            continue;
        }
        match r.rating {
            Rating::High => s.high += 1,
            Rating::Low => s.low += 1,
        }
    }
    let n = s.high + s.low;
    s.high_rate = (n > 0).then(|| s.high as f64 / n as f64);
    s
}

/// Serialized writer over the rating log; reads see a consistent snapshot.
pub struct RatingStore {
    path: PathBuf,
    log: Mutex<Vec<RatingRecord>>,
}

impl RatingStore {
    pub fn open(path: impl Into<PathBuf>) -> Result<Self> {
        let path = path.into();
        let log = if path.exists() { read_log(&path)? } else { Vec::new() };
        Ok(RatingStore {
            path,
            log: Mutex::new(log),
        })
    }

    /// The store's log under the data root.
    pub fn for_store(store: &CorpusStore) -> Result<Self> {
        Self::open(store.root().join(RATINGS_FILE))
    }

    pub fn path(&self) -> &Path {
        &self.path
    }

    /// Appends `record` after checking the document exists; returns the
    /// updated summary for the record's corpus and rater.
    pub fn record(&self, store: &CorpusStore, mut record: RatingRecord) -> Result<RatingSummary> {
        if record.rater.trim().is_empty() {
            return Err(Error::param("rater", "must be non-empty"));
        }
        if !store.contains_doc(&record.corpus, &record.doc_id)? {
            return Err(Error::NotFound(format!(
                "document `{}` in corpus `{}`",
                record.doc_id, record.corpus
            )));
        }
        if record.timestamp.is_empty() {
            record.timestamp = chrono::Utc::now().to_rfc3339_opts(chrono::SecondsFormat::Millis, true);
        }
        let mut log = self.log.lock().unwrap();
        if let Some(dir) = self.path.parent() {
            std::fs::create_dir_all(dir).at(dir)?;
        }
        let mut f = OpenOptions::new().create(true).append(true).open(&self.path).at(&self.path)?;
        let mut line = serde_json::to_vec(&record)?;
        line.push(b'\n');
        f.write_all(&line).at(&self.path)?;
        let summary_key = (record.corpus.clone(), record.rater.clone());
        log.push(record);
        Ok(summarize(&log, Some(&summary_key.0), Some(&summary_key.1)))
    }

    pub fn records(&self) -> Vec<RatingRecord> {
        self.log.lock().unwrap().clone()
    }

    pub fn summary(&self, corpus: Option<&str>, rater: Option<&str>) -> RatingSummary {
        summarize(&self.log.lock().unwrap(), corpus, rater)
    }
}

pub fn read_log(path: &Path) -> Result<Vec<RatingRecord>> {
    let f = File::open(path).at(path)?;
    let mut out = Vec::new();
    for line in BufReader::new(f).lines() {
        let line = line.at(path)?;
        if !line.trim().is_empty() {
            out.push(serde_json::from_str(&line)?);
        }
    }
    Ok(out)
}
