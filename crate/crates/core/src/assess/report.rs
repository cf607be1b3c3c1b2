//! Per-corpus assessment reports and overlays across corpora.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::knowledge::{knowledge_metrics, Gazetteer, KnowledgeMetrics};
use super::llm::{self, LlmSummary};
use super::mtld;
use super::ratings::{RatingStore, RatingSummary};
use super::semantic::{semantic_diversity, topic_diversity, SemanticDiversity, TopicDiversity};
use super::vectors::{TfIdf, Vectorizer, DEFAULT_DIMENSION};
use crate::corpus::{validate_name, CorpusStore, Document};
use crate::error::{Error, IoContext, Result};
use crate::hist::{coarsest, BinSpec, Histogram, Stats};
use crate::lm::NGramModel;
use crate::monitor::Monitor;

pub const REPORT_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Metric {
    Mtld,
    Semantic,
    Topic,
    Knowledge,
    Ppl,
}

impl std::str::FromStr for Metric {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "mtld" => Ok(Metric::Mtld),
            "semantic" => Ok(Metric::Semantic),
            "topic" => Ok(Metric::Topic),
            "knowledge" => Ok(Metric::Knowledge),
            "ppl" => Ok(Metric::Ppl),
            other => Err(Error::param("metrics", format!("unknown metric `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AssessConfig {
    #[serde(default = "all_metrics")]
    pub metrics: Vec<Metric>,
    #[serde(default = "default_sample")]
    pub sample: usize,
    #[serde(default = "default_seed")]
    pub seed: u64,
    #[serde(default = "default_ttr")]
    pub ttr_threshold: f64,
    #[serde(default = "default_dimension")]
    pub dimension: u32,
    #[serde(default = "default_k")]
    pub topics: usize,
    /// Reference LM file for the perplexity metric, relative to the store
    /// root unless absolute.
    #[serde(default)]
    pub ppl_model: Option<String>,
    #[serde(default)]
    pub gazetteer: Vec<String>,
    #[serde(default = "yes")]
    pub entity_heuristic: bool,
    #[serde(default = "mtld_bins")]
    pub mtld_bins: BinSpec,
    #[serde(default = "semantic_bins")]
    pub semantic_bins: BinSpec,
    #[serde(default = "ppl_bins")]
    pub ppl_bins: BinSpec,
}

fn all_metrics() -> Vec<Metric> {
    vec![Metric::Mtld, Metric::Semantic, Metric::Topic, Metric::Knowledge, Metric::Ppl]
}
fn default_sample() -> usize {
    1000
}
fn default_seed() -> u64 {
    7
}
fn default_ttr() -> f64 {
    mtld::DEFAULT_TTR_THRESHOLD
}
fn default_dimension() -> u32 {
    DEFAULT_DIMENSION
}
fn default_k() -> usize {
    8
}
fn yes() -> bool {
    true
}
pub fn mtld_bins() -> BinSpec {
    BinSpec::linear(0.0, 200.0, 40)
}
pub fn semantic_bins() -> BinSpec {
    BinSpec::linear(0.0, 1.0, 20)
}
pub fn ppl_bins() -> BinSpec {
    BinSpec::logarithmic(1.0, 1e5, 25)
}

impl Default for AssessConfig {
    fn default() -> Self {
        serde_json::from_str("{}").expect("defaults deserialize")
    }
}

impl AssessConfig {
    pub fn validate(&self) -> Result<()> {
        if self.metrics.is_empty() {
            return Err(Error::param("metrics", "select at least one metric"));
        }
        if self.sample == 0 {
            return Err(Error::param("sample", "must be >= 1"));
        }
        if !(self.ttr_threshold > 0.0 && self.ttr_threshold < 1.0) {
            return Err(Error::param("ttr_threshold", "must be in (0, 1)"));
        }
        if !self.dimension.is_power_of_two() {
            return Err(Error::param("dimension", "must be a power of two"));
        }
        if self.metrics.contains(&Metric::Topic) && self.topics < 2 {
            return Err(Error::param("topics", "must be >= 2"));
        }
        if self.metrics.contains(&Metric::Ppl) && self.ppl_model.is_none() {
            return Err(Error::param("ppl_model", "the ppl metric needs a reference model"));
        }
        self.mtld_bins.validate()?;
        self.semantic_bins.validate()?;
        self.ppl_bins.validate()
    }

    fn wants(&self, m: Metric) -> bool {
        self.metrics.contains(&m)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Distribution {
    pub histogram: Histogram,
    pub stats: Option<Stats>,
    /// Documents left out of the histogram (no tokens).
    pub skipped: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MtldSection {
    #[serde(flatten)]
    pub distribution: Distribution,
    /// Documents whose type/token ratio never fell below the threshold.
    pub degenerate: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AssessmentReport {
    pub version: u32,
    pub corpus: String,
    pub config: AssessConfig,
    pub sample_size: usize,
    pub mtld: Option<MtldSection>,
    pub semantic: Option<SemanticDiversity>,
    pub topic: Option<TopicDiversity>,
    pub knowledge: Option<KnowledgeMetrics>,
    pub ppl: Option<Distribution>,
    /// Absent when nobody rated this corpus.
    pub rating: Option<RatingSummary>,
    /// Absent when the corpus was never sent to the LLM judge.
    pub llm: Option<LlmSummary>,
    /// Degenerate paths taken while computing the report.
    #[serde(default)]
    pub notes: Vec<String>,
}

impl AssessmentReport {
    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let r: AssessmentReport = serde_json::from_str(s)?;
        if r.version != REPORT_VERSION {
            return Err(Error::param("version", format!("unsupported report version {}", r.version)));
        }
        Ok(r)
    }
}

/// MTLD per document, skipping documents without tokens.
pub fn mtld_distribution(docs: &[Document], threshold: f64, spec: BinSpec) -> Result<MtldSection> {
    let per: Vec<Option<(f64, bool)>> = docs
        .par_iter()
        .map(|d| {
            let toks = crate::text::lexical_tokens(&d.text);
            if toks.is_empty() {
                return Ok(None);
            }
            Ok(Some((mtld::mtld_tokens(&toks, threshold)?, mtld::is_degenerate(&toks, threshold))))
        })
        .collect::<Result<_>>()?;
    let values: Vec<f64> = per.iter().flatten().map(|(v, _)| *v).collect();
    Ok(MtldSection {
        distribution: Distribution {
            histogram: Histogram::from_values(spec, values.iter().copied())?,
            stats: Stats::of(&values),
            skipped: per.iter().filter(|p| p.is_none()).count() as u64,
        },
        degenerate: per.iter().flatten().filter(|(_, d)| *d).count() as u64,
    })
}

/// Reference-model perplexity per document; documents without tokens are
/// skipped.
pub fn ppl_distribution(docs: &[Document], model: &NGramModel, spec: BinSpec) -> Result<Distribution> {
    let ppl: Vec<f64> = docs.par_iter().map(|d| model.perplexity(&d.text).ppl).collect();
    let finite: Vec<f64> = ppl.iter().copied().filter(|p| p.is_finite()).collect();
    Ok(Distribution {
        histogram: Histogram::from_values(spec, finite.iter().copied())?,
        stats: Stats::of(&finite),
        skipped: (ppl.len() - finite.len()) as u64,
    })
}

fn resolve(store: &CorpusStore, p: &str) -> PathBuf {
    let path = Path::new(p);
    if path.is_absolute() {
        path.to_path_buf()
    } else {
        store.root().join(path)
    }
}

/// Builds the report for a seeded sample of `corpus`. Everything except
/// the LLM section is a function of the corpus, config and stored ratings.
pub fn build_report(store: &CorpusStore, corpus: &str, config: &AssessConfig, monitor: &dyn Monitor) -> Result<AssessmentReport> {
    config.validate()?;
    let handle = store.get(corpus)?;
    let model = match (&config.ppl_model, config.wants(Metric::Ppl)) {
        (Some(p), true) => Some(NGramModel::load(&resolve(store, p))?),
        _ => None,
    };
    let docs = store.sample(&handle, config.sample, config.seed)?;
    monitor.progress(0.1, "sampled");
    let mut notes = Vec::new();
    let steps = config.metrics.len() as f64;
    let mut done = 0.0;
    let mut step = |name: &str| -> Result<()> {
        done += 1.0;
        monitor.checkpoint()?;
        monitor.progress(0.1 + 0.9 * done / steps, name);
        Ok(())
    };

    let mtld = if config.wants(Metric::Mtld) {
        let m = mtld_distribution(&docs, config.ttr_threshold, config.mtld_bins)?;
        if m.degenerate > 0 {
            notes.push(format!(
                "mtld: {} documents never fell below the TTR threshold; scored by length",
                m.degenerate
            ));
        }
        step("mtld")?;
        Some(m)
    } else {
        None
    };

    let needs_vectors = config.wants(Metric::Semantic) || config.wants(Metric::Topic);
    let vectors = if needs_vectors {
        let pairs: Vec<(&str, &str)> = docs.iter().map(|d| (d.id.as_str(), d.text.as_str())).collect();
        TfIdf { dim: config.dimension }.vectorize(&pairs)?
    } else {
        Vec::new()
    };
    let semantic = if config.wants(Metric::Semantic) {
        let s = if vectors.len() >= 2 {
            Some(semantic_diversity(&vectors, config.semantic_bins)?)
        } else {
            notes.push("semantic: fewer than 2 documents sampled".into());
            None
        };
        step("semantic")?;
        s
    } else {
        None
    };
    let topic = if config.wants(Metric::Topic) {
        let t = if vectors.len() >= config.topics {
            let (t, _) = topic_diversity(&vectors, config.topics, config.seed)?;
            if t.k_reduced {
                notes.push(format!(
                    "topic: only {} distinct documents, k reduced from {} to {}",
                    t.k, t.k_requested, t.k
                ));
            }
            Some(t)
        } else {
            notes.push(format!("topic: fewer than k = {} documents sampled", config.topics));
            None
        };
        step("topic")?;
        t
    } else {
        None
    };
    let knowledge = if config.wants(Metric::Knowledge) {
        let k = if docs.is_empty() {
            notes.push("knowledge: empty sample".into());
            None
        } else {
            let texts: Vec<&str> = docs.iter().map(|d| d.text.as_str()).collect();
            Some(knowledge_metrics(
                &texts,
                &Gazetteer::new(&config.gazetteer),
                config.entity_heuristic,
            )?)
        };
        step("knowledge")?;
        k
    } else {
        None
    };
    let ppl = match &model {
        Some(m) => {
            let p = ppl_distribution(&docs, m, config.ppl_bins)?;
            step("ppl")?;
            Some(p)
        }
        None => None,
    };

    let ratings = RatingStore::for_store(store)?;
    let rs = ratings.summary(Some(corpus), None);
    let rating = (rs.high + rs.low > 0).then_some(rs);
    let records = llm::load_records(store, corpus)?;
    let llm = (!records.is_empty()).then(|| llm::summarize(&records));

    Ok(AssessmentReport {
        version: REPORT_VERSION,
        corpus: corpus.to_string(),
        config: config.clone(),
        sample_size: docs.len(),
        mtld,
        semantic,
        topic,
        knowledge,
        ppl,
        rating,
        llm,
        notes,
    })
}

pub fn reports_dir(store: &CorpusStore) -> PathBuf {
    store.root().join("reports")
}

/// Writes `reports/<corpus>.json`, replacing an older report.
pub fn save_report(store: &CorpusStore, report: &AssessmentReport) -> Result<PathBuf> {
    validate_name(&report.corpus)?;
    let dir = reports_dir(store);
    std::fs::create_dir_all(&dir).at(&dir)?;
    let path = dir.join(format!("{}.json", report.corpus));
    std::fs::write(&path, report.to_json()?).at(&path)?;
    Ok(path)
}

pub fn load_report(path: &Path) -> Result<AssessmentReport> {
    AssessmentReport::from_json(&std::fs::read_to_string(path).at(path)?)
}

pub fn list_reports(store: &CorpusStore) -> Result<Vec<AssessmentReport>> {
    let dir = reports_dir(store);
    if !dir.exists() {
        return Ok(Vec::new());
    }
    let mut paths: Vec<PathBuf> = std::fs::read_dir(&dir)
        .at(&dir)?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "json"))
        .collect();
    paths.sort();
    paths.iter().map(|p| load_report(p)).collect()
}

/// One histogram metric across corpora, on a shared bin spec.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OverlaySeries {
    pub spec: BinSpec,
    pub edges: Vec<f64>,
    /// Counts per corpus, in the order of `Overlay::corpora`; `None` where
    /// the report lacks the metric.
    pub counts: Vec<Option<Vec<u64>>>,
    pub means: Vec<Option<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Overlay {
    pub corpora: Vec<String>,
    pub series: BTreeMap<String, OverlaySeries>,
    /// Scalar metrics per corpus.
    pub scalars: BTreeMap<String, Vec<Option<f64>>>,
    pub notes: Vec<String>,
}

fn overlay_series(name: &str, hists: Vec<Series>, notes: &mut Vec<String>) -> Result<Option<OverlaySeries>> {
    let specs: Vec<BinSpec> = hists.iter().flatten().map(|(h, _)| h.spec).collect();
    let Some(spec) = coarsest(&specs) else {
        return Ok(None);
    };
    let mut counts = Vec::new();
    let mut means = Vec::new();
    let mut rebinned = false;
    for h in &hists {
        match h {
            Some((h, mean)) => {
                let c = if h.spec == spec {
                    h.counts.clone()
                } else {
                    rebinned = true;
                    h.rebin(spec)?.counts
                };
                counts.push(Some(c));
                means.push(*mean);
            }
            None => {
                counts.push(None);
                means.push(None);
            }
        }
    }
    if rebinned {
        notes.push(format!(
            "{name}: bin specs differed; re-binned to {} bins over [{}, {}]",
            spec.bins, spec.lo, spec.hi
        ));
    }
    Ok(Some(OverlaySeries {
        spec,
        edges: spec.edges(),
        counts,
        means,
    }))
}

fn dist(d: &Distribution) -> (&Histogram, Option<f64>) {
    (&d.histogram, d.stats.map(|s| s.mean))
}

/// One report's histogram and mean for a metric, if it was computed.
type Series<'a> = Option<(&'a Histogram, Option<f64>)>;

/// Aligns the histogram metrics of several reports on shared bin edges.
pub fn overlay(reports: &[AssessmentReport]) -> Result<Overlay> {
    if reports.is_empty() {
        return Err(Error::param("reports", "need at least one report"));
    }
    let mut notes = Vec::new();
    let mut series = BTreeMap::new();
    let entries: [(&str, Vec<Series>); 3] = [
        (
            "mtld",
            reports.iter().map(|r| r.mtld.as_ref().map(|m| dist(&m.distribution))).collect(),
        ),
        (
            "semantic",
            reports
                .iter()
                .map(|r| r.semantic.as_ref().map(|s| (&s.histogram, Some(s.stats.mean))))
                .collect(),
        ),
        ("ppl", reports.iter().map(|r| r.ppl.as_ref().map(dist)).collect()),
    ];
    for (name, hists) in entries {
        if let Some(s) = overlay_series(name, hists, &mut notes)? {
            series.insert(name.to_string(), s);
        }
    }
    let mut scalars: BTreeMap<String, Vec<Option<f64>>> = BTreeMap::new();
    let mut put = |name: &str, f: &dyn Fn(&AssessmentReport) -> Option<f64>| {
        scalars.insert(name.to_string(), reports.iter().map(f).collect());
    };
    put("topic_mean_similarity", &|r| r.topic.as_ref().and_then(|t| t.mean_similarity));
    put("knowledge_density", &|r| r.knowledge.as_ref().map(|k| k.density));
    put("knowledge_diversity", &|r| r.knowledge.as_ref().and_then(|k| k.diversity));
    put("rating_high_rate", &|r| r.rating.and_then(|s| s.high_rate));
    put("llm_mean_score", &|r| r.llm.and_then(|s| s.mean_score));
    Ok(Overlay {
        corpora: reports.iter().map(|r| r.corpus.clone()).collect(),
        series,
        scalars,
        notes,
    })
}
