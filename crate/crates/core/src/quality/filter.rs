//! Scoring corpora with a quality model and thresholding the scores.

use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::classifier::QualityScorer;
use crate::corpus::{CorpusHandle, CorpusStore, Document};
use crate::error::{Error, IoContext, Result};
use crate::hist::{BinSpec, Histogram};
use crate::monitor::Monitor;

pub const SCORE_BINS: usize = 100;

pub fn score_bins() -> BinSpec {
    BinSpec::linear(0.0, 1.0, SCORE_BINS)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QualityScore {
    pub doc_id: String,
    pub score: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FilterRun {
    pub corpus: CorpusHandle,
    pub threshold: f64,
    pub total: u64,
    pub kept: u64,
    /// Scores of every input document, kept or not.
    pub histogram: Histogram,
}

/// Directory holding the scores and histogram of filter output `name`.
pub fn scores_dir(store: &CorpusStore, name: &str) -> PathBuf {
    store.root().join("quality").join(name)
}

/// Scores every document of `corpus` in corpus order.
pub fn score_corpus(store: &CorpusStore, corpus: &str, scorer: &dyn QualityScorer, monitor: &dyn Monitor) -> Result<Vec<QualityScore>> {
    let input = store.get(corpus)?;
    let per_shard = input
        .shards
        .par_iter()
        .map(|rel| {
            monitor.checkpoint()?;
            Ok(store
                .read_shard(rel)?
                .into_iter()
                .map(|d| QualityScore {
                    score: scorer.score(&d.text),
                    doc_id: d.id,
                })
                .collect::<Vec<_>>())
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(per_shard.into_iter().flatten().collect())
}

/// Keeps the documents scoring at least `threshold`. Per-document scores
/// and a histogram of all scores are written next to the output.
pub fn filter(
    store: &CorpusStore,
    corpus: &str,
    scorer: &dyn QualityScorer,
    threshold: f64,
    out_name: &str,
    config_hash: &str,
    monitor: &dyn Monitor,
) -> Result<FilterRun> {
    if !(0.0..=1.0).contains(&threshold) {
        return Err(Error::param("threshold", "must be in [0, 1]"));
    }
    store.ensure_name_free(out_name)?;
    let input = store.get(corpus)?;
    let staging = store.staging(out_name)?;
    let total_shards = input.shards.len().max(1);
    let done = AtomicUsize::new(0);
    let per_shard: Vec<Vec<QualityScore>> = input
        .shards
        .par_iter()
        .enumerate()
        .map(|(i, rel)| {
            monitor.checkpoint()?;
            let docs = store.read_shard(rel)?;
            let scores: Vec<QualityScore> = docs
                .iter()
                .map(|d| QualityScore {
                    doc_id: d.id.clone(),
                    score: scorer.score(&d.text),
                })
                .collect();
            let kept: Vec<&Document> = docs
                .iter()
                .zip(&scores)
                .filter(|(_, s)| s.score >= threshold)
                .map(|(d, _)| d)
                .collect();
            staging.write_shard(i, kept)?;
            let n = done.fetch_add(1, Ordering::SeqCst) + 1;
            monitor.progress(n as f64 / total_shards as f64, &format!("shard {n}/{}", input.shards.len()));
            Ok(scores)
        })
        .collect::<Result<_>>()?;
    monitor.checkpoint()?;
    let scores: Vec<QualityScore> = per_shard.into_iter().flatten().collect();
    let histogram = Histogram::from_values(score_bins(), scores.iter().map(|s| s.score))?;
    let kept = scores.iter().filter(|s| s.score >= threshold).count() as u64;

    let dir = scores_dir(store, out_name);
    std::fs::create_dir_all(&dir).at(&dir)?;
    write_scores(&dir.join("scores.jsonl"), &scores)?;
    std::fs::write(dir.join("histogram.json"), serde_json::to_vec_pretty(&histogram)?).at(dir.join("histogram.json"))?;

    let handle = store.register_derived(corpus, out_name, "quality-filter", config_hash, staging)?;
    Ok(FilterRun {
        corpus: handle,
        threshold,
        total: scores.len() as u64,
        kept,
        histogram,
    })
}

pub fn write_scores(path: &Path, scores: &[QualityScore]) -> Result<()> {
    let mut buf = Vec::new();
    for s in scores {
        serde_json::to_writer(&mut buf, s)?;
        buf.push(b'\n');
    }
    std::fs::write(path, buf).at(path)
}

pub fn read_scores(path: &Path) -> Result<Vec<QualityScore>> {
    let text = std::fs::read_to_string(path).at(path)?;
    text.lines()
        .filter(|l| !l.trim().is_empty())
        .map(|l| serde_json::from_str(l).map_err(Error::from))
        .collect()
}

pub fn load_histogram(store: &CorpusStore, name: &str) -> Result<Histogram> {
    let path = scores_dir(store, name).join("histogram.json");
    if !path.exists() {
        return Err(Error::NotFound(format!("quality histogram for `{name}`")));
    }
    Ok(serde_json::from_slice(&std::fs::read(&path).at(&path)?)?)
}
