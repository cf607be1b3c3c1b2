//! Negative-centric dataset recipes: positives from the current source,
//! negatives manufactured by contamination, perplexity tails and ratings.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::classifier::Example;
use super::contaminate::{contaminate, fisher_yates, ContaminationRule, DonorPool, Op};
use crate::assess::llm::{self, EvalStatus};
use crate::assess::ratings::{self, Rating};
use crate::corpus::{validate_name, CorpusStore, Document};
use crate::error::{Error, IoContext, Result};
use crate::lm::{self, NGramModel};
use crate::monitor::Monitor;
use crate::text::{self, mix_seeds, stable_hash64};

pub const RECIPE_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WeightedSource {
    pub corpus: String,
    #[serde(default = "one")]
    pub weight: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WeightedRule {
    pub rule: ContaminationRule,
    #[serde(default = "one")]
    pub weight: f64,
}

/// Documents whose reference-model perplexity exceeds the `quantile`
/// boundary. Scores come from a stored score file, or are computed with
/// `model`. Paths are relative to the store root unless absolute.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PplTail {
    #[serde(default)]
    pub model: Option<String>,
    #[serde(default)]
    pub scores: Option<String>,
    /// Corpus the tail is drawn from; the first positive source by default.
    #[serde(default)]
    pub corpus: Option<String>,
    #[serde(default = "default_quantile")]
    pub quantile: f64,
    #[serde(default = "one")]
    pub weight: f64,
}

/// Documents rated Low by people, plus LLM-judged documents at or below
/// `llm_low_max`, restricted to the positive sources.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RatedLow {
    /// Rating log; the store's default log when absent.
    #[serde(default)]
    pub ratings: Option<String>,
    #[serde(default = "yes")]
    pub include_llm: bool,
    #[serde(default = "default_llm_low_max")]
    pub llm_low_max: u8,
    #[serde(default = "one")]
    pub weight: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct NegativeComponents {
    #[serde(default)]
    pub contaminated: Vec<WeightedRule>,
    #[serde(default)]
    pub ppl_tail: Option<PplTail>,
    #[serde(default)]
    pub rated_low: Option<RatedLow>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Split {
    pub train: f64,
    pub valid: f64,
}

impl Default for Split {
    fn default() -> Self {
        Split { train: 0.8, valid: 0.2 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QualityRecipe {
    #[serde(default = "recipe_version")]
    pub version: u32,
    /// Dataset name; output goes to `datasets/<name>/`.
    pub name: String,
    pub positive_sources: Vec<WeightedSource>,
    #[serde(default)]
    pub negatives: NegativeComponents,
    pub target_size: usize,
    #[serde(default)]
    pub split: Split,
    #[serde(default)]
    pub seed: u64,
}

fn one() -> f64 {
    1.0
}
fn yes() -> bool {
    true
}
fn default_quantile() -> f64 {
    0.85
}
fn default_llm_low_max() -> u8 {
    2
}
fn recipe_version() -> u32 {
    RECIPE_VERSION
}

fn check_weight(field: &str, w: f64) -> Result<()> {
    if w > 0.0 && w.is_finite() {
        Ok(())
    } else {
        Err(Error::param(field, "weight must be > 0"))
    }
}

impl QualityRecipe {
    pub fn validate(&self) -> Result<()> {
        if self.version != RECIPE_VERSION {
            return Err(Error::param("version", format!("unsupported recipe version {}", self.version)));
        }
        validate_name(&self.name)?;
        if self.positive_sources.is_empty() {
            return Err(Error::param("positive_sources", "at least one source is required"));
        }
        for (i, s) in self.positive_sources.iter().enumerate() {
            check_weight(&format!("positive_sources[{i}].weight"), s.weight)?;
        }
        let n = &self.negatives;
        for (i, r) in n.contaminated.iter().enumerate() {
            check_weight(&format!("negatives.contaminated[{i}].weight"), r.weight)?;
            r.rule.validate()?;
        }
        if let Some(t) = &n.ppl_tail {
            check_weight("negatives.ppl_tail.weight", t.weight)?;
            if !(t.quantile > 0.0 && t.quantile < 1.0) {
                return Err(Error::param("negatives.ppl_tail.quantile", "must be in (0, 1)"));
            }
            if t.model.is_none() && t.scores.is_none() {
                return Err(Error::param("negatives.ppl_tail", "needs `model` or `scores`"));
            }
        }
        if let Some(r) = &n.rated_low {
            check_weight("negatives.rated_low.weight", r.weight)?;
            if !(1..=5).contains(&r.llm_low_max) {
                return Err(Error::param("negatives.rated_low.llm_low_max", "must be in [1, 5]"));
            }
        }
        if n.contaminated.is_empty() && n.ppl_tail.is_none() && n.rated_low.is_none() {
            return Err(Error::param("negatives", "at least one negative component is required"));
        }
        if self.target_size < 2 {
            return Err(Error::param("target_size", "must be >= 2 so both labels are present"));
        }
        let s = self.split;
        if !(s.train > 0.0 && s.valid > 0.0 && (s.train + s.valid - 1.0).abs() < 1e-9) {
            return Err(Error::param("split", "train and valid must be > 0 and sum to 1"));
        }
        Ok(())
    }

    pub fn config_hash(&self) -> String {
        text::config_hash(self)
    }

    /// Positive and negative target counts.
    pub fn label_counts(&self) -> (usize, usize) {
        let wp: f64 = self.positive_sources.iter().map(|s| s.weight).sum();
        let wn: f64 = self.negative_weights().iter().sum();
        let c = apportion(self.target_size, &[wp, wn]);
        // both labels need at least one example
        match (c[0], c[1]) {
            (0, n) => (1, n - 1),
            (p, 0) => (p - 1, 1),
            (p, n) => (p, n),
        }
    }

    fn negative_weights(&self) -> Vec<f64> {
        let n = &self.negatives;
        n.contaminated
            .iter()
            .map(|r| r.weight)
            .chain(n.ppl_tail.as_ref().map(|t| t.weight))
            .chain(n.rated_low.as_ref().map(|r| r.weight))
            .collect()
    }
}

/// Splits `total` proportionally to `weights` by the largest-remainder
/// method; ties go to the earlier entry.
pub fn apportion(total: usize, weights: &[f64]) -> Vec<usize> {
    let sum: f64 = weights.iter().sum();
    if weights.is_empty() || sum <= 0.0 {
        return vec![0; weights.len()];
    }
    let exact: Vec<f64> = weights.iter().map(|w| total as f64 * w / sum).collect();
    let mut out: Vec<usize> = exact.iter().map(|e| e.floor() as usize).collect();
    let mut rest = total - out.iter().sum::<usize>();
    let mut order: Vec<usize> = (0..weights.len()).collect();
    order.sort_by(|&a, &b| {
        (exact[b] - exact[b].floor())
            .total_cmp(&(exact[a] - exact[a].floor()))
            .then(a.cmp(&b))
    });
    for i in order {
        if rest == 0 {
            break;
        }
        out[i] += 1;
        rest -= 1;
    }
    out
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Origin {
    Positive {
        corpus: String,
    },
    Contaminated {
        corpus: String,
        parent: String,
        rule: String,
        rule_index: usize,
        seed_mix: u64,
        #[serde(default, skip_serializing_if = "std::ops::Not::not")]
        noop: bool,
    },
    PplTail {
        corpus: String,
        ppl: Option<f64>,
        boundary: f64,
    },
    RatedLow {
        corpus: String,
        /// `human` or `llm`.
        by: String,
    },
}

impl Origin {
    pub fn kind(&self) -> &'static str {
        match self {
            Origin::Positive { .. } => "positive",
            Origin::Contaminated { .. } => "contaminated",
            Origin::PplTail { .. } => "ppl_tail",
            Origin::RatedLow { .. } => "rated_low",
        }
    }

    /// Document the example was derived from; itself for everything but
    /// contaminations.
    fn group<'a>(&'a self, doc_id: &'a str) -> &'a str {
        match self {
            Origin::Contaminated { parent, .. } => parent,
            _ => doc_id,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SplitName {
    Train,
    Valid,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub label: u8,
    pub doc_id: String,
    pub split: SplitName,
    pub origin: Origin,
}

/// One line of `train.jsonl` / `valid.jsonl`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetRow {
    pub doc_id: String,
    pub label: u8,
    pub text: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Shortfall {
    pub component: String,
    pub requested: usize,
    pub built: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetSummary {
    pub name: String,
    pub recipe_hash: String,
    pub positives: usize,
    pub negatives: usize,
    pub by_kind: BTreeMap<String, usize>,
    pub train: usize,
    pub valid: usize,
    /// Components that could not be filled from the available documents.
    pub shortfall: Vec<Shortfall>,
    /// Size of the perplexity tail pool before sampling, when configured.
    pub ppl_tail_pool: Option<usize>,
    pub ppl_boundary: Option<f64>,
}

#[derive(Debug, Clone)]
pub struct Dataset {
    pub recipe: QualityRecipe,
    pub summary: DatasetSummary,
    pub manifest: Vec<ManifestEntry>,
    pub train: Vec<DatasetRow>,
    pub valid: Vec<DatasetRow>,
}

impl Dataset {
    pub fn train_examples(&self) -> Vec<Example> {
        to_examples(&self.train)
    }

    pub fn valid_examples(&self) -> Vec<Example> {
        to_examples(&self.valid)
    }
}

fn to_examples(rows: &[DatasetRow]) -> Vec<Example> {
    rows.iter()
        .map(|r| Example {
            text: r.text.clone(),
            label: r.label,
        })
        .collect()
}

pub fn dataset_dir(store: &CorpusStore, name: &str) -> PathBuf {
    store.root().join("datasets").join(name)
}

fn resolve(store: &CorpusStore, p: &str) -> PathBuf {
    let path = Path::new(p);
    if path.is_absolute() {
        path.to_path_buf()
    } else {
        store.root().join(path)
    }
}

struct Candidate {
    doc: Document,
    origin: Origin,
    label: u8,
}

/// Seeded permutation of `items`.
fn shuffled<T>(mut items: Vec<T>, seed: u64) -> Vec<T> {
    fisher_yates(&mut items, &mut text::rng(seed));
    items
}

const SALT_POSITIVE: u64 = 0x706f73;
const SALT_PARENT: u64 = 0x706172;
const SALT_TAIL: u64 = 0x7461_696c;
const SALT_RATED: u64 = 0x7261_7465;
const SALT_SPLIT: u64 = 0x73706c;
const SALT_RULE: u64 = 0x7275_6c65;

/// Scores for the tail corpus, from the configured score file or model.
fn tail_scores(store: &CorpusStore, tail: &PplTail, corpus: &str, monitor: &dyn Monitor) -> Result<Vec<lm::DocScore>> {
    if let Some(p) = &tail.scores {
        return lm::read_scores(&resolve(store, p));
    }
    let model = NGramModel::load(&resolve(store, tail.model.as_deref().expect("validated")))?;
    lm::score_corpus(store, &store.get(corpus)?, &model, monitor)
}

/// Builds the labeled dataset described by `recipe` and writes it under
/// `datasets/<name>/`. Components that cannot be filled are built partially
/// and listed in the summary's `shortfall`.
pub fn build_dataset(store: &CorpusStore, recipe: &QualityRecipe, monitor: &dyn Monitor) -> Result<Dataset> {
    recipe.validate()?;
    let dir = dataset_dir(store, &recipe.name);
    if dir.exists() {
        return Err(Error::NameTaken(recipe.name.clone()));
    }
    for s in &recipe.positive_sources {
        store.get(&s.corpus)?;
    }

    // Positive pools, each doc id appearing once across sources.
    let mut seen = HashSet::new();
    let mut pools: Vec<Vec<Document>> = Vec::new();
    for s in &recipe.positive_sources {
        monitor.checkpoint()?;
        let docs = store.load_all(&store.get(&s.corpus)?)?;
        pools.push(docs.into_iter().filter(|d| seen.insert(d.id.clone())).collect());
    }
    monitor.progress(0.2, "loaded positive sources");

    let (n_pos, n_neg) = recipe.label_counts();
    let neg_counts = apportion(n_neg, &recipe.negative_weights());
    let mut shortfall = Vec::new();
    let mut negatives: Vec<Candidate> = Vec::new();
    let mut excluded: HashSet<String> = HashSet::new();
    let mut next_component = recipe.negatives.contaminated.len();

    // Perplexity tail.
    let (mut tail_pool, mut boundary) = (None, None);
    if let Some(tail) = &recipe.negatives.ppl_tail {
        let want = neg_counts[next_component];
        next_component += 1;
        let corpus = tail.corpus.clone().unwrap_or_else(|| recipe.positive_sources[0].corpus.clone());
        let scores = tail_scores(store, tail, &corpus, monitor)?;
        let finite: Vec<f64> = scores.iter().map(|s| s.ppl).filter(|p| p.is_finite()).collect();
        let b = lm::quantile_boundary(&finite, tail.quantile)?;
        let ids: HashSet<&str> = scores.iter().filter(|s| s.ppl > b).map(|s| s.doc_id.as_str()).collect();
        let ppl_of: HashMap<&str, f64> = scores.iter().map(|s| (s.doc_id.as_str(), s.ppl)).collect();
        excluded.extend(ids.iter().map(|s| s.to_string()));
        let docs: Vec<Document> = store
            .load_all(&store.get(&corpus)?)?
            .into_iter()
            .filter(|d| ids.contains(d.id.as_str()))
            .collect();
        tail_pool = Some(docs.len());
        boundary = Some(b);
        let picked: Vec<Document> = shuffled(docs, mix_seeds(&[recipe.seed, SALT_TAIL]))
            .into_iter()
            .take(want)
            .collect();
        if picked.len() < want {
            shortfall.push(Shortfall {
                component: "ppl_tail".into(),
                requested: want,
                built: picked.len(),
            });
        }
        for d in picked {
            let ppl = ppl_of.get(d.id.as_str()).copied().filter(|p| p.is_finite());
            negatives.push(Candidate {
                origin: Origin::PplTail {
                    corpus: corpus.clone(),
                    ppl,
                    boundary: b,
                },
                doc: d,
                label: 0,
            });
        }
    }

    // Rated Low by people or the LLM judge.
    if let Some(rl) = &recipe.negatives.rated_low {
        let want = neg_counts[next_component];
        let log = match &rl.ratings {
            Some(p) => ratings::read_log(&resolve(store, p))?,
            None => ratings::RatingStore::for_store(store)?.records(),
        };
        let mut low: Vec<(String, String, &'static str)> = ratings::active(&log)
            .into_iter()
            .filter(|r| r.rating == Rating::Low)
            .map(|r| (r.corpus.clone(), r.doc_id.clone(), "human"))
            .collect();
        if rl.include_llm {
            for s in &recipe.positive_sources {
                for r in llm::load_records(store, &s.corpus)? {
                    if r.status == EvalStatus::Scored && r.score.is_some_and(|x| x <= rl.llm_low_max) {
                        low.push((r.corpus, r.doc_id, "llm"));
                    }
                }
            }
        }
        let mut by_id: HashMap<&str, &Document> = HashMap::new();
        for d in pools.iter().flatten() {
            by_id.entry(d.id.as_str()).or_insert(d);
        }
        let sources: HashSet<&str> = recipe.positive_sources.iter().map(|s| s.corpus.as_str()).collect();
        let mut taken = HashSet::new();
        let mut found = Vec::new();
        for (corpus, id, by) in low {
            if !sources.contains(corpus.as_str()) || excluded.contains(&id) || !taken.insert(id.clone()) {
                continue;
            }
            if let Some(d) = by_id.get(id.as_str()) {
                found.push(Candidate {
                    doc: (*d).clone(),
                    origin: Origin::RatedLow { corpus, by: by.into() },
                    label: 0,
                });
            }
        }
        excluded.extend(taken);
        let picked: Vec<Candidate> = shuffled(found, mix_seeds(&[recipe.seed, SALT_RATED]))
            .into_iter()
            .take(want)
            .collect();
        if picked.len() < want {
            shortfall.push(Shortfall {
                component: "rated_low".into(),
                requested: want,
                built: picked.len(),
            });
        }
        negatives.extend(picked);
    }

    // Positives, per source by weight, excluding anything marked bad.
    let pools: Vec<Vec<Document>> = pools
        .into_iter()
        .map(|p| p.into_iter().filter(|d| !excluded.contains(&d.id)).collect())
        .collect();
    let pos_weights: Vec<f64> = recipe.positive_sources.iter().map(|s| s.weight).collect();
    let mut positives: Vec<Candidate> = Vec::new();
    for (i, (want, pool)) in apportion(n_pos, &pos_weights).into_iter().zip(&pools).enumerate() {
        let corpus = &recipe.positive_sources[i].corpus;
        let picked: Vec<Document> = shuffled(pool.clone(), mix_seeds(&[recipe.seed, SALT_POSITIVE, i as u64]))
            .into_iter()
            .take(want)
            .collect();
        if picked.len() < want {
            shortfall.push(Shortfall {
                component: format!("positive:{corpus}"),
                requested: want,
                built: picked.len(),
            });
        }
        positives.extend(picked.into_iter().map(|doc| Candidate {
            doc,
            origin: Origin::Positive { corpus: corpus.clone() },
            label: 1,
        }));
    }
    monitor.progress(0.5, "selected positives");

    // Contaminated copies of positive-pool documents.
    let parents: Vec<(usize, &Document)> = recipe
        .positive_sources
        .iter()
        .enumerate()
        .flat_map(|(i, _)| pools[i].iter().map(move |d| (i, d)))
        .collect();
    let needs_donors = recipe.negatives.contaminated.iter().any(|r| r.rule.op == Op::Replace);
    let donors = if needs_donors {
        DonorPool::new(parents.iter().map(|(_, d)| d.text.clone()).collect())
    } else {
        DonorPool::default()
    };
    for (ri, wr) in recipe.negatives.contaminated.iter().enumerate() {
        monitor.checkpoint()?;
        let want = neg_counts[ri];
        let mut rule = wr.rule;
        rule.seed_mix = mix_seeds(&[recipe.seed, SALT_RULE, ri as u64]);
        let order = shuffled(parents.clone(), mix_seeds(&[recipe.seed, SALT_PARENT, ri as u64]));
        // Contaminate in chunks until enough succeed; too-short parents are skipped.
        let mut made: Vec<Candidate> = Vec::new();
        for chunk in order.chunks(want.max(1)) {
            if made.len() >= want {
                break;
            }
            let out: Vec<Option<Candidate>> = chunk
                .par_iter()
                .map(|(si, d)| match contaminate(d, &rule, &donors) {
                    Ok(c) => Ok(Some(Candidate {
                        origin: Origin::Contaminated {
                            corpus: recipe.positive_sources[*si].corpus.clone(),
                            parent: d.id.clone(),
                            rule: rule.label(),
                            rule_index: ri,
                            seed_mix: rule.seed_mix,
                            noop: c.meta.contains_key("contamination_noop"),
                        },
                        doc: c,
                        label: 0,
                    })),
                    Err(Error::Precondition(_)) => Ok(None),
                    Err(e) => Err(e),
                })
                .collect::<Result<_>>()?;
            made.extend(out.into_iter().flatten());
        }
        made.truncate(want);
        if made.len() < want {
            shortfall.push(Shortfall {
                component: format!("contaminated[{ri}]:{}", rule.label()),
                requested: want,
                built: made.len(),
            });
        }
        negatives.extend(made);
    }
    monitor.progress(0.8, "built negatives");

    // Contaminations first so they read after positives in the manifest.
    let mut all = positives;
    let mut contaminated: Vec<Candidate> = Vec::new();
    let mut other: Vec<Candidate> = Vec::new();
    for c in negatives {
        if matches!(c.origin, Origin::Contaminated { .. }) {
            contaminated.push(c);
        } else {
            other.push(c);
        }
    }
    all.extend(contaminated);
    all.extend(other);

    // Group-level split keeps each parent with all of its contaminations.
    let mut groups: Vec<&str> = all.iter().map(|c| c.origin.group(&c.doc.id)).collect();
    groups.sort_unstable();
    groups.dedup();
    let split_seed = mix_seeds(&[recipe.seed, SALT_SPLIT]);
    groups.sort_by_key(|g| (mix_seeds(&[split_seed, stable_hash64(g.as_bytes())]), *g));
    let n_valid = ((recipe.split.valid * groups.len() as f64) - 1e-9).ceil().max(1.0) as usize;
    let n_valid = n_valid.min(groups.len().saturating_sub(1)).max(usize::from(groups.len() == 1));
    let valid_groups: HashSet<String> = groups[..n_valid].iter().map(|g| g.to_string()).collect();

    let mut manifest = Vec::with_capacity(all.len());
    let (mut train, mut valid) = (Vec::new(), Vec::new());
    let mut by_kind: BTreeMap<String, usize> = BTreeMap::new();
    for c in all {
        let split = if valid_groups.contains(c.origin.group(&c.doc.id)) {
            SplitName::Valid
        } else {
            SplitName::Train
        };
        *by_kind.entry(c.origin.kind().to_string()).or_default() += 1;
        let row = DatasetRow {
            doc_id: c.doc.id.clone(),
            label: c.label,
            text: c.doc.text,
        };
        match split {
            SplitName::Train => train.push(row),
            SplitName::Valid => valid.push(row),
        }
        manifest.push(ManifestEntry {
            label: c.label,
            doc_id: c.doc.id,
            split,
            origin: c.origin,
        });
    }
    let positives = manifest.iter().filter(|m| m.label == 1).count();
    let summary = DatasetSummary {
        name: recipe.name.clone(),
        recipe_hash: recipe.config_hash(),
        positives,
        negatives: manifest.len() - positives,
        by_kind,
        train: train.len(),
        valid: valid.len(),
        shortfall,
        ppl_tail_pool: tail_pool,
        ppl_boundary: boundary,
    };
    let ds = Dataset {
        recipe: recipe.clone(),
        summary,
        manifest,
        train,
        valid,
    };
    write_dataset(store, &ds)?;
    monitor.progress(1.0, "done");
    Ok(ds)
}

fn write_jsonl<T: Serialize>(path: &Path, items: &[T]) -> Result<()> {
    let mut w = BufWriter::new(File::create(path).at(path)?);
    for it in items {
        serde_json::to_writer(&mut w, it)?;
        w.write_all(b"\n").at(path)?;
    }
    w.flush().at(path)
}

fn read_jsonl<T: serde::de::DeserializeOwned>(path: &Path) -> Result<Vec<T>> {
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

/// Writes into a temporary directory, then renames into place.
fn write_dataset(store: &CorpusStore, ds: &Dataset) -> Result<()> {
    let dir = dataset_dir(store, &ds.recipe.name);
    let parent = dir.parent().expect("datasets dir");
    std::fs::create_dir_all(parent).at(parent)?;
    let tmp = parent.join(format!(".tmp-{}-{}", ds.recipe.name, std::process::id()));
    if tmp.exists() {
        std::fs::remove_dir_all(&tmp).at(&tmp)?;
    }
    std::fs::create_dir_all(&tmp).at(&tmp)?;
    let write = || -> Result<()> {
        std::fs::write(tmp.join("recipe.json"), serde_json::to_vec_pretty(&ds.recipe)?).at(tmp.join("recipe.json"))?;
        std::fs::write(tmp.join("summary.json"), serde_json::to_vec_pretty(&ds.summary)?).at(tmp.join("summary.json"))?;
        write_jsonl(&tmp.join("manifest.jsonl"), &ds.manifest)?;
        write_jsonl(&tmp.join("train.jsonl"), &ds.train)?;
        write_jsonl(&tmp.join("valid.jsonl"), &ds.valid)?;
        std::fs::rename(&tmp, &dir).at(&dir)
    };
    let res = write();
    if res.is_err() {
        let _ = std::fs::remove_dir_all(&tmp);
    }
    res
}

pub fn load_dataset(store: &CorpusStore, name: &str) -> Result<Dataset> {
    validate_name(name)?;
    let dir = dataset_dir(store, name);
    if !dir.exists() {
        return Err(Error::NotFound(format!("dataset `{name}`")));
    }
    let recipe = serde_json::from_slice(&std::fs::read(dir.join("recipe.json")).at(dir.join("recipe.json"))?)?;
    let summary = serde_json::from_slice(&std::fs::read(dir.join("summary.json")).at(dir.join("summary.json"))?)?;
    Ok(Dataset {
        recipe,
        summary,
        manifest: read_jsonl(&dir.join("manifest.jsonl"))?,
        train: read_jsonl(&dir.join("train.jsonl"))?,
        valid: read_jsonl(&dir.join("valid.jsonl"))?,
    })
}

/// Dataset names present under the store root.
pub fn list_datasets(store: &CorpusStore) -> Result<Vec<String>> {
    let dir = store.root().join("datasets");
    if !dir.exists() {
        return Ok(Vec::new());
    }
    let mut out = Vec::new();
    for e in std::fs::read_dir(&dir).at(&dir)? {
        let name = e.at(&dir)?.file_name().to_string_lossy().into_owned();
        if !name.starts_with('.') {
            out.push(name);
        }
    }
    out.sort();
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn apportion_largest_remainder() {
        assert_eq!(apportion(1000, &[1.0, 1.0]), vec![500, 500]);
        assert_eq!(apportion(10, &[1.0, 1.0, 1.0]), vec![4, 3, 3]);
        assert_eq!(apportion(7, &[3.0, 1.0]), vec![5, 2]);
        assert_eq!(apportion(7, &[3.0, 1.0]).iter().sum::<usize>(), 7);
    }

    #[test]
    fn label_counts_keep_both_labels() {
        let r: QualityRecipe = serde_json::from_value(serde_json::json!({
            "name": "ds",
            "positive_sources": [{"corpus": "a", "weight": 1000.0}],
            "negatives": {"contaminated": [{"rule": {"unit": "word", "op": "shuffle", "intensity": 1.0}, "weight": 1.0}]},
            "target_size": 4
        }))
        .unwrap();
        r.validate().unwrap();
        assert_eq!(r.label_counts(), (3, 1));
    }

    #[test]
    fn recipe_validation() {
        let mut r: QualityRecipe = serde_json::from_value(serde_json::json!({
            "name": "ds",
            "positive_sources": [{"corpus": "a"}],
            "negatives": {},
            "target_size": 10
        }))
        .unwrap();
        assert!(r.validate().is_err());
        r.negatives.ppl_tail = Some(PplTail {
            model: None,
            scores: Some("s.jsonl".into()),
            corpus: None,
            quantile: 0.85,
            weight: 1.0,
        });
        r.validate().unwrap();
        r.split = Split { train: 0.9, valid: 0.2 };
        assert!(r.validate().is_err());
    }
}
