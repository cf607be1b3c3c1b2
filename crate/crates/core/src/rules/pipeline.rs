use std::sync::atomic::{AtomicUsize, Ordering};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::json;

use super::cell::{CellKind, CompiledCell, PluginRegistry, RuleCell, Verdict};
use crate::corpus::{reservoir, CorpusHandle, CorpusStore, Document};
use crate::error::{Error, Result};
use crate::monitor::Monitor;
use crate::text;

/// Ordered, serializable rule pipeline. Cell order is significant.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PipelineSpec {
    pub name: String,
    #[serde(default = "default_version")]
    pub version: u32,
    pub cells: Vec<RuleCell>,
}

fn default_version() -> u32 {
    1
}

impl PipelineSpec {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("pipeline serializes")
    }

    pub fn from_json(s: &str) -> Result<Self> {
        Ok(serde_json::from_str(s)?)
    }

    pub fn config_hash(&self) -> String {
        text::config_hash(self)
    }

    /// Starting point for web text: length, word-length, symbol and
    /// stopword heuristics in the style of widely used web-corpus rules.
    /// Thresholds are suggestions to be tuned against hit cases.
    pub fn web_default() -> Self {
        PipelineSpec {
            name: "web-default".into(),
            version: 1,
            cells: vec![
                RuleCell::new(CellKind::MaxWordCount, json!({"max": 100_000})),
                RuleCell::new(CellKind::MeanWordLengthRange, json!({"min": 3, "max": 10})),
                RuleCell::new(CellKind::SpecialCharRatioMax, json!({"max": 0.1})),
                RuleCell::new(CellKind::PunctuationRatioMax, json!({"max": 0.3})),
                RuleCell::new(CellKind::StopwordFractionMin, json!({"min": 0.05, "lang": "en"})),
                RuleCell::new(CellKind::MinWordCount, json!({"min": 50})),
            ],
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct CellStats {
    pub seen: u64,
    pub hits: u64,
    pub hit_rate: f64,
    #[serde(default)]
    pub incidents: u64,
}

impl CellStats {
    pub fn merge(&mut self, other: &CellStats) {
        self.seen += other.seen;
        self.hits += other.hits;
        self.incidents += other.incidents;
        self.finish();
    }

    fn finish(&mut self) {
        self.hit_rate = if self.seen == 0 { 0.0 } else { self.hits as f64 / self.seen as f64 };
    }
}

pub struct CompiledPipeline {
    pub spec: PipelineSpec,
    pub cells: Vec<CompiledCell>,
}

/// What happened to one document at one cell.
#[derive(Debug, Clone)]
pub struct CellEvent {
    pub cell: usize,
    pub before: Document,
    pub verdict: Verdict,
}

impl CompiledPipeline {
    pub fn compile(spec: &PipelineSpec) -> Result<Self> {
        Self::compile_with(spec, &PluginRegistry::default())
    }

    pub fn compile_with(spec: &PipelineSpec, plugins: &PluginRegistry) -> Result<Self> {
        if spec.cells.is_empty() {
            return Err(Error::param("cells", "pipeline must contain at least one cell"));
        }
        let cells = spec
            .cells
            .iter()
            .enumerate()
            .map(|(i, c)| {
                CompiledCell::compile_with(c, plugins).map_err(|e| match e {
                    Error::InvalidParam { field, message } => Error::InvalidParam {
                        field: format!("cells[{i}].{field}"),
                        message,
                    },
                    other => other,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(CompiledPipeline { spec: spec.clone(), cells })
    }

    /// Runs `doc` through the cells in order; the first drop ends processing.
    /// `stats` must hold one entry per cell.
    pub fn process(&self, doc: Document, stats: &mut [CellStats], mut on_event: impl FnMut(CellEvent)) -> Option<Document> {
        let mut current = doc;
        for (i, cell) in self.cells.iter().enumerate() {
            stats[i].seen += 1;
            let eval = cell.evaluate(&current);
            if eval.incident.is_some() {
                stats[i].incidents += 1;
            }
            if eval.verdict.is_hit() {
                stats[i].hits += 1;
                on_event(CellEvent {
                    cell: i,
                    before: current.clone(),
                    verdict: eval.verdict.clone(),
                });
            }
            match eval.verdict {
                Verdict::Keep => {}
                Verdict::Drop { .. } => return None,
                Verdict::Transformed { doc } => current = doc,
            }
        }
        Some(current)
    }

    pub fn new_stats(&self) -> Vec<CellStats> {
        vec![CellStats::default(); self.cells.len()]
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PipelineRun {
    pub corpus: CorpusHandle,
    pub stats: Vec<CellStats>,
}

/// Runs the pipeline over every shard of `corpus` using `jobs` worker
/// threads. Output shard `i` holds the survivors of input shard `i`, so the
/// output is identical for any `jobs`.
pub fn run_pipeline(
    store: &CorpusStore,
    pipeline: &CompiledPipeline,
    corpus: &str,
    out_name: &str,
    jobs: usize,
    monitor: &dyn Monitor,
) -> Result<PipelineRun> {
    store.ensure_name_free(out_name)?;
    let input = store.get(corpus)?;
    let staging = store.staging(out_name)?;
    let total = input.shards.len().max(1);
    let done = AtomicUsize::new(0);
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs.max(1))
        .build()
        .map_err(|e| Error::param("jobs", e.to_string()))?;

    let per_shard: Vec<Vec<CellStats>> = pool.install(|| {
        input
            .shards
            .par_iter()
            .enumerate()
            .map(|(i, rel)| {
                monitor.checkpoint()?;
                let mut stats = pipeline.new_stats();
                let kept: Vec<Document> = store
                    .read_shard(rel)?
                    .into_iter()
                    .filter_map(|d| pipeline.process(d, &mut stats, |_| {}))
                    .collect();
                staging.write_shard(i, &kept)?;
                let n = done.fetch_add(1, Ordering::SeqCst) + 1;
                monitor.progress(n as f64 / total as f64, &format!("shard {}/{}", n, input.shards.len()));
                Ok(stats)
            })
            .collect::<Result<Vec<_>>>()
    })?;
    monitor.checkpoint()?;

    let mut stats = pipeline.new_stats();
    for shard in &per_shard {
        for (acc, s) in stats.iter_mut().zip(shard) {
            acc.merge(s);
        }
    }
    for s in stats.iter_mut() {
        s.finish();
    }
    let handle = store.register_derived(corpus, out_name, "rule-filter", &pipeline.spec.config_hash(), staging)?;
    Ok(PipelineRun { corpus: handle, stats })
}

/// Reservoir sample of up to `n` documents on which `cell` (applied alone)
/// drops or transforms.
pub fn sample_hits(cell: &CompiledCell, store: &CorpusStore, corpus: &str, n: usize, seed: u64) -> Result<Vec<(Document, Verdict)>> {
    if n == 0 {
        return Err(Error::param("n", "must be >= 1"));
    }
    let handle = store.get(corpus)?;
    let hits = store.iter_docs(&handle).filter_map(|d| match d {
        Ok(d) => {
            let v = cell.apply(&d);
            v.is_hit().then_some(Ok((d, v)))
        }
        Err(e) => Some(Err(e)),
    });
    reservoir(hits, n, seed)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct HitCase {
    pub doc_id: String,
    pub before: String,
    pub verdict: Verdict,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CellPreview {
    pub index: usize,
    pub kind: CellKind,
    pub stats: CellStats,
    pub cases: Vec<HitCase>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PipelinePreview {
    pub sample_size: usize,
    pub kept: usize,
    pub cells: Vec<CellPreview>,
}

/// Sequential per-cell hit rates on `docs` plus up to `cases_per_cell`
/// reservoir-sampled hit cases for each cell.
pub fn preview(pipeline: &CompiledPipeline, docs: &[Document], cases_per_cell: usize, seed: u64) -> PipelinePreview {
    let mut stats = pipeline.new_stats();
    let mut events: Vec<Vec<CellEvent>> = vec![Vec::new(); pipeline.cells.len()];
    let mut kept = 0;
    for d in docs {
        if pipeline.process(d.clone(), &mut stats, |e| events[e.cell].push(e)).is_some() {
            kept += 1;
        }
    }
    let cells = events
        .into_iter()
        .enumerate()
        .map(|(i, evs)| {
            let mut s = stats[i];
            s.finish();
            let cases = reservoir(evs.into_iter().map(Ok), cases_per_cell, text::mix_seeds(&[seed, i as u64]))
                .unwrap_or_default()
                .into_iter()
                .map(|e| HitCase {
                    doc_id: e.before.id.clone(),
                    before: e.before.text,
                    verdict: e.verdict,
                })
                .collect();
            CellPreview {
                index: i,
                kind: pipeline.spec.cells[i].kind,
                stats: s,
                cases,
            }
        })
        .collect();
    PipelinePreview {
        sample_size: docs.len(),
        kept,
        cells,
    }
}
