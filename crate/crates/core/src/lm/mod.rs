//! n-gram language model trained on a reference corpus, perplexity scoring
//! and quantile boundaries over score distributions.

mod model;

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub use model::{LmConfig, NGramModel, PerplexityScore, Smoothing, BOS, UNK};

use crate::corpus::{CorpusHandle, CorpusStore};
use crate::error::{Error, IoContext, Result};
use crate::monitor::Monitor;

/// Nearest-rank order statistic: the `ceil(q * n)`-th smallest score.
/// At least a `q` fraction of the scores is `<=` the returned value.
pub fn quantile_boundary(scores: &[f64], q: f64) -> Result<f64> {
    if scores.is_empty() {
        return Err(Error::Precondition("quantile of an empty score list".into()));
    }
    if !(q > 0.0 && q < 1.0) {
        return Err(Error::param("q", "must be in (0, 1)"));
    }
    if scores.iter().any(|s| s.is_nan()) {
        return Err(Error::param("scores", "NaN score"));
    }
    let mut sorted = scores.to_vec();
    sorted.sort_by(f64::total_cmp);
    let n = sorted.len();
    // tolerate representation error, e.g. 0.85 * 100 = 85.00000000000001
    let rank = ((q * n as f64) - 1e-9).ceil().max(1.0) as usize;
    Ok(sorted[rank.min(n) - 1])
}

/// Per-document perplexity as stored on disk, one JSON object per line.
/// Infinite perplexities (documents without tokens) are written as `null`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DocScore {
    pub doc_id: String,
    #[serde(with = "finite_or_null")]
    pub ppl: f64,
    pub token_count: usize,
}

mod finite_or_null {
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(v: &f64, s: S) -> Result<S::Ok, S::Error> {
        if v.is_finite() {
            s.serialize_f64(*v)
        } else {
            s.serialize_none()
        }
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<f64, D::Error> {
        Ok(Option::<f64>::deserialize(d)?.unwrap_or(f64::INFINITY))
    }
}

/// Scores every document of `corpus`, shards in parallel, corpus order kept.
pub fn score_corpus(store: &CorpusStore, corpus: &CorpusHandle, model: &NGramModel, monitor: &dyn Monitor) -> Result<Vec<DocScore>> {
    let per_shard = corpus
        .shards
        .par_iter()
        .map(|rel| {
            monitor.checkpoint()?;
            Ok(store
                .read_shard(rel)?
                .into_iter()
                .map(|d| {
                    let s = model.perplexity(&d.text);
                    DocScore {
                        doc_id: d.id,
                        ppl: s.ppl,
                        token_count: s.token_count,
                    }
                })
                .collect::<Vec<_>>())
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(per_shard.into_iter().flatten().collect())
}

pub fn write_scores(path: &Path, scores: &[DocScore]) -> Result<()> {
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir).at(dir)?;
    }
    let mut w = BufWriter::new(File::create(path).at(path)?);
    for s in scores {
        serde_json::to_writer(&mut w, s)?;
        w.write_all(b"\n").at(path)?;
    }
    w.flush().at(path)
}

pub fn read_scores(path: &Path) -> Result<Vec<DocScore>> {
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
