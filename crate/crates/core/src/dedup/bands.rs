//! Per-band bucket tables for one LSH pass.
//!
//! Each band gets an open-addressing table with linear probing, sized to
//! `ceil(TABLE_OVERHEAD * N)` slots of `ENTRY_BYTES` each, which is exactly
//! what the planner's memory model charges.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::plan::TABLE_OVERHEAD;

const EMPTY: u64 = u64::MAX;

/// Earlier bucket members a new document is paired with. Buckets of exact
/// duplicates would otherwise produce a quadratic number of pairs; linking
/// to the earliest members keeps every cluster connected.
pub const MAX_BUCKET_LINKS: usize = 64;

struct BandTable {
    // (band key, doc index); doc == EMPTY marks a free slot
    slots: Vec<(u64, u64)>,
    entries: u64,
}

impl BandTable {
    fn for_docs(n: usize) -> Self {
        let cap = ((n as f64 * TABLE_OVERHEAD).ceil() as usize).max(1);
        BandTable {
            slots: vec![(0, EMPTY); cap],
            entries: 0,
        }
    }

    /// Inserts `(key, doc)` and appends up to `MAX_BUCKET_LINKS` earlier
    /// documents with the same key to `out`.
    fn insert(&mut self, key: u64, doc: u64, out: &mut Vec<u64>) {
        let cap = self.slots.len();
        let mut i = (key % cap as u64) as usize;
        let mut linked = 0;
        loop {
            let (k, d) = self.slots[i];
            if d == EMPTY {
                self.slots[i] = (key, doc);
                self.entries += 1;
                return;
            }
            if k == key && linked < MAX_BUCKET_LINKS {
                out.push(d);
                linked += 1;
            }
            i += 1;
            if i == cap {
                i = 0;
            }
        }
    }

    /// Heap bytes actually reserved for the slots.
    fn bytes(&self) -> u64 {
        (self.slots.capacity() * std::mem::size_of::<(u64, u64)>()) as u64
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct BandStats {
    /// Entries held by all band tables at their common peak.
    pub entries: u64,
    /// Bytes allocated for those tables.
    pub table_bytes: u64,
    /// Distinct candidate pairs.
    pub candidates: u64,
}

/// Candidate pairs `(i, j)`, `i < j`, sharing at least one band key.
/// `keys` is document-major: `keys[doc * r + band]`. All `r` tables are
/// alive together before being measured and released.
pub fn candidate_pairs(keys: &[u64], r: usize) -> (Vec<(u64, u64)>, BandStats) {
    assert!(r > 0 && keys.len().is_multiple_of(r), "keys must hold r values per document");
    let n = keys.len() / r;
    let built: Vec<(BandTable, Vec<(u64, u64)>)> = (0..r)
        .into_par_iter()
        .map(|band| {
            let mut table = BandTable::for_docs(n);
            let mut pairs = Vec::new();
            let mut hits = Vec::new();
            for doc in 0..n {
                hits.clear();
                table.insert(keys[doc * r + band], doc as u64, &mut hits);
                pairs.extend(hits.iter().map(|&d| (d, doc as u64)));
            }
            (table, pairs)
        })
        .collect();
    let entries = built.iter().map(|(t, _)| t.entries).sum();
    let table_bytes = built.iter().map(|(t, _)| t.bytes()).sum();
    let mut pairs: Vec<(u64, u64)> = built.into_iter().flat_map(|(_, p)| p).collect();
    pairs.par_sort_unstable();
    pairs.dedup();
    let stats = BandStats {
        entries,
        table_bytes,
        candidates: pairs.len() as u64,
    };
    (pairs, stats)
}

#[cfg(test)]
mod tests {
    use super::super::plan::ENTRY_BYTES;
    use super::*;

    #[test]
    fn shared_keys_pair_up() {
        // 4 docs, 2 bands
        let keys = [1, 10, 2, 20, 1, 30, 3, 20];
        let (pairs, stats) = candidate_pairs(&keys, 2);
        assert_eq!(pairs, vec![(0, 2), (1, 3)]);
        assert_eq!(stats.entries, 8);
        assert_eq!(stats.table_bytes, 2 * 6 * ENTRY_BYTES);
    }

    #[test]
    fn colliding_slots_do_not_pair_distinct_keys() {
        // keys that all land in the same probe chain
        let keys: Vec<u64> = (0..10).map(|i| i * 15).collect();
        let (pairs, _) = candidate_pairs(&keys, 1);
        assert!(pairs.is_empty());
    }

    #[test]
    fn large_buckets_are_capped_but_connected() {
        let keys = vec![7u64; 200];
        let (pairs, stats) = candidate_pairs(&keys, 1);
        assert_eq!(stats.entries, 200);
        assert!(pairs.iter().all(|&(a, _)| a < MAX_BUCKET_LINKS as u64));
        for doc in 1..200 {
            assert!(pairs.contains(&(0, doc)));
        }
    }
}
