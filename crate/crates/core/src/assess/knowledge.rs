//! Entity density and diversity.

use std::collections::{BTreeMap, HashMap};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::semantic::mean_pairwise_cosine;
use super::vectors::{char_ngram_vector, DocumentVector};
use crate::error::{Error, Result};
use crate::text::is_punctuation;

/// Dimension of the entity-name vectors.
pub const ENTITY_DIMENSION: u32 = 1 << 16;
const TOP_ENTITIES: usize = 20;

/// Known entity surface forms, matched token by token, case-sensitively,
/// ignoring punctuation around tokens. Longer forms win.
#[derive(Debug, Clone, Default)]
pub struct Gazetteer {
    by_first: HashMap<String, Vec<Vec<String>>>,
}

impl Gazetteer {
    pub fn new<S: AsRef<str>>(forms: &[S]) -> Self {
        let mut by_first: HashMap<String, Vec<Vec<String>>> = HashMap::new();
        for f in forms {
            let toks: Vec<String> = f.as_ref().split_whitespace().map(strip).filter(|t| !t.is_empty()).collect();
            if let Some(first) = toks.first() {
                by_first.entry(first.clone()).or_default().push(toks);
            }
        }
        for v in by_first.values_mut() {
            v.sort_by(|a, b| b.len().cmp(&a.len()).then(a.cmp(b)));
            v.dedup();
        }
        Gazetteer { by_first }
    }

    pub fn is_empty(&self) -> bool {
        self.by_first.is_empty()
    }

    fn longest_match(&self, toks: &[String]) -> Option<usize> {
        self.by_first
            .get(&toks[0])?
            .iter()
            .find(|form| form.len() <= toks.len() && toks[..form.len()] == form[..])
            .map(Vec::len)
    }
}

fn strip(t: &str) -> String {
    t.trim_matches(is_punctuation).to_string()
}

fn capitalized(t: &str) -> bool {
    t.chars().next().is_some_and(char::is_uppercase)
}

fn ends_clause(raw: &str) -> bool {
    raw.chars().last().is_some_and(is_punctuation)
}

fn ends_sentence(raw: &str) -> bool {
    raw.trim_end_matches(['"', '\'', ')', ']', '”', '’'])
        .chars()
        .last()
        .is_some_and(|c| matches!(c, '.' | '!' | '?' | '。' | '！' | '？'))
}

/// Entity mentions in `text`, in order. Gazetteer forms match anywhere;
/// with `heuristic`, runs of two or more capitalized tokens also count
/// unless the run starts a sentence. Punctuation after a token ends a run.
pub fn entities(text: &str, gazetteer: &Gazetteer, heuristic: bool) -> Vec<String> {
    let raw: Vec<&str> = text.split_whitespace().collect();
    let toks: Vec<String> = raw.iter().map(|t| strip(t)).collect();
    let mut out = Vec::new();
    let mut i = 0;
    while i < toks.len() {
        if toks[i].is_empty() {
            i += 1;
            continue;
        }
        if let Some(len) = gazetteer.longest_match(&toks[i..]) {
            out.push(toks[i..i + len].join(" "));
            i += len;
            continue;
        }
        let sentence_start = i == 0 || ends_sentence(raw[i - 1]);
        if heuristic && !sentence_start && capitalized(&toks[i]) {
            let mut j = i + 1;
            while j < toks.len() && capitalized(&toks[j]) && !ends_clause(raw[j - 1]) {
                j += 1;
            }
            if j - i >= 2 {
                out.push(toks[i..j].join(" "));
                i = j;
                continue;
            }
        }
        i += 1;
    }
    out
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KnowledgeMetrics {
    /// Entity mentions per word.
    pub density: f64,
    /// One minus the mean pairwise similarity of distinct entity names;
    /// absent with fewer than two distinct entities.
    pub diversity: Option<f64>,
    pub mentions: u64,
    pub distinct_entities: u64,
    pub words: u64,
    /// Most frequent entities, ties by name.
    pub top_entities: Vec<(String, u64)>,
}

pub fn knowledge_metrics<S: AsRef<str> + Sync>(texts: &[S], gazetteer: &Gazetteer, heuristic: bool) -> Result<KnowledgeMetrics> {
    if texts.is_empty() {
        return Err(Error::Precondition("knowledge metrics need a non-empty sample".into()));
    }
    let per_doc: Vec<(usize, Vec<String>)> = texts
        .par_iter()
        .map(|t| (t.as_ref().split_whitespace().count(), entities(t.as_ref(), gazetteer, heuristic)))
        .collect();
    let words: u64 = per_doc.iter().map(|(w, _)| *w as u64).sum();
    let mut counts: BTreeMap<String, u64> = BTreeMap::new();
    for (_, ents) in &per_doc {
        for e in ents {
            *counts.entry(e.clone()).or_default() += 1;
        }
    }
    let mentions: u64 = counts.values().sum();
    let vecs: Vec<DocumentVector> = counts
        .keys()
        .map(|e| char_ngram_vector(e, ENTITY_DIMENSION))
        .collect::<Result<_>>()?;
    let mut top: Vec<(String, u64)> = counts.iter().map(|(k, v)| (k.clone(), *v)).collect();
    top.sort_by(|a, b| b.1.cmp(&a.1).then(a.0.cmp(&b.0)));
    top.truncate(TOP_ENTITIES);
    Ok(KnowledgeMetrics {
        density: if words == 0 { 0.0 } else { mentions as f64 / words as f64 },
        diversity: mean_pairwise_cosine(&vecs).map(|m| 1.0 - m),
        mentions,
        distinct_entities: counts.len() as u64,
        words,
        top_entities: top,
    })
}
