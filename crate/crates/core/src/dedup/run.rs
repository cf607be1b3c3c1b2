//! Multi-pass LSH deduplication of a registered corpus.

use std::collections::{BTreeMap, HashSet};

use petgraph::unionfind::UnionFind;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::bands::{candidate_pairs, BandStats};
use super::graph::{save_graph, DuplicateGraph, GraphEdge, GraphNode};
use super::minhash::{band_keys, estimated_jaccard, minhash_with, perm_seeds, shingle};
use super::plan::{DedupPlan, ENTRY_BYTES};
use crate::corpus::{CorpusHandle, CorpusStore};
use crate::error::{Error, Result};
use crate::monitor::Monitor;
use crate::text::mix_seeds;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PassStats {
    pub pass: u32,
    #[serde(flatten)]
    pub bands: BandStats,
    /// Candidate pairs confirmed as edges in this pass.
    pub confirmed: u64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DedupRun {
    pub corpus: CorpusHandle,
    pub graph: DuplicateGraph,
    pub total: u64,
    pub removed: u64,
    pub removal_rate: f64,
    pub passes: Vec<PassStats>,
}

/// Seed of pass `pass`; passes draw from disjoint seed streams.
pub fn pass_seed(master: u64, pass: u32) -> u64 {
    mix_seeds(&[master, 0x7061_7373, pass as u64])
}

/// Document-major signatures for one pass: `num_perm` values per document.
fn pass_signatures(store: &CorpusStore, input: &CorpusHandle, plan: &DedupPlan, seeds: &[u64]) -> Result<Vec<u64>> {
    let per_shard = input
        .shards
        .par_iter()
        .map(|rel| {
            let docs = store.read_shard(rel)?;
            let mut out = Vec::with_capacity(docs.len() * seeds.len());
            for d in &docs {
                out.extend(minhash_with(&shingle(&d.text, plan.shingle_k)?, seeds)?);
            }
            Ok(out)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(per_shard.concat())
}

fn doc_ids(store: &CorpusStore, input: &CorpusHandle) -> Result<Vec<Vec<String>>> {
    input
        .shards
        .par_iter()
        .map(|rel| Ok(store.read_shard(rel)?.into_iter().map(|d| d.id).collect()))
        .collect()
}

/// Runs every pass of `plan`, clusters confirmed pairs and writes the
/// survivors to `out_name`. The graph is stored under both corpus names.
pub fn run_dedup(store: &CorpusStore, corpus: &str, plan: &DedupPlan, out_name: &str, monitor: &dyn Monitor) -> Result<DedupRun> {
    plan.validate()?;
    store.ensure_name_free(out_name)?;
    let input = store.get(corpus)?;
    let shard_ids = doc_ids(store, &input)?;
    let ids: Vec<&str> = shard_ids.iter().flatten().map(String::as_str).collect();
    let n = ids.len();
    let steps = plan.passes as f64 + 1.0;

    let mut edges: BTreeMap<(u64, u64), f64> = BTreeMap::new();
    let mut passes = Vec::with_capacity(plan.passes as usize);
    for pass in 0..plan.passes {
        monitor.checkpoint()?;
        let seeds = perm_seeds(plan.num_perm, pass_seed(plan.seed, pass));
        let sigs = pass_signatures(store, &input, plan, &seeds)?;
        let keys: Vec<u64> = sigs.par_chunks(plan.num_perm).flat_map_iter(|s| band_keys(s, plan.b)).collect();
        let (pairs, bands) = if n == 0 {
            (Vec::new(), BandStats::default())
        } else {
            candidate_pairs(&keys, plan.r)
        };
        drop(keys);
        // slack of one slot per table for the capacity rounding
        let limit = plan.memory_budget_bytes + plan.r as u64 * ENTRY_BYTES;
        if bands.table_bytes > limit {
            return Err(Error::Precondition(format!(
                "pass {pass}: band tables took {} bytes against a budget of {}; the plan assumed {} documents but the corpus has {n}",
                bands.table_bytes, plan.memory_budget_bytes, plan.corpus_doc_count
            )));
        }
        let sig = |i: u64| &sigs[i as usize * plan.num_perm..(i as usize + 1) * plan.num_perm];
        let confirmed: Vec<((u64, u64), f64)> = pairs
            .par_iter()
            .filter_map(|&(a, b)| {
                let j = estimated_jaccard(sig(a), sig(b));
                (j >= plan.jaccard_threshold).then_some(((a, b), j))
            })
            .collect();
        for (pair, j) in &confirmed {
            let e = edges.entry(*pair).or_insert(*j);
            *e = e.max(*j);
        }
        passes.push(PassStats {
            pass,
            bands,
            confirmed: confirmed.len() as u64,
        });
        monitor.progress((pass as f64 + 1.0) / steps, &format!("pass {}/{}", pass + 1, plan.passes));
    }
    monitor.checkpoint()?;

    // keep-first clustering in corpus order
    let mut uf = UnionFind::<usize>::new(n);
    for &(a, b) in edges.keys() {
        uf.union(a as usize, b as usize);
    }
    let mut seen_per_root: std::collections::HashMap<usize, usize> = std::collections::HashMap::new();
    let mut in_graph = vec![false; n];
    for &(a, b) in edges.keys() {
        in_graph[a as usize] = true;
        in_graph[b as usize] = true;
    }
    let mut removed: HashSet<usize> = HashSet::new();
    for i in (0..n).filter(|&i| in_graph[i]) {
        let kept = seen_per_root.entry(uf.find(i)).or_insert(0);
        if *kept < plan.keep_per_cluster {
            *kept += 1;
        } else {
            removed.insert(i);
        }
    }

    let staging = store.staging(out_name)?;
    let offsets: Vec<usize> = shard_ids
        .iter()
        .scan(0, |acc, s| {
            let o = *acc;
            *acc += s.len();
            Some(o)
        })
        .collect();
    input
        .shards
        .par_iter()
        .enumerate()
        .map(|(si, rel)| {
            monitor.checkpoint()?;
            let docs = store.read_shard(rel)?;
            let keep = docs
                .iter()
                .enumerate()
                .filter(|(k, _)| !removed.contains(&(offsets[si] + k)))
                .map(|(_, d)| d);
            staging.write_shard(si, keep)?;
            Ok(())
        })
        .collect::<Result<Vec<()>>>()?;

    let graph = DuplicateGraph {
        nodes: (0..n)
            .filter(|&i| in_graph[i])
            .map(|i| GraphNode { id: ids[i].to_string() })
            .collect(),
        edges: edges
            .iter()
            .map(|(&(a, b), &j)| GraphEdge {
                a: ids[a as usize].to_string(),
                b: ids[b as usize].to_string(),
                j,
            })
            .collect(),
    };
    let handle = store.register_derived(corpus, out_name, "dedup", &crate::text::config_hash(plan), staging)?;
    save_graph(store, corpus, &graph)?;
    save_graph(store, out_name, &graph)?;
    monitor.progress(1.0, "done");
    let removed = removed.len() as u64;
    Ok(DedupRun {
        corpus: handle,
        graph,
        total: n as u64,
        removed,
        removal_rate: if n == 0 { 0.0 } else { removed as f64 / n as f64 },
        passes,
    })
}
