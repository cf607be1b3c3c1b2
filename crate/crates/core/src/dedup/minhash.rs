//! Word shingling and MinHash signatures.

use crate::error::{Error, Result};
use crate::text::{mix64, mix_seeds, stable_hash64};

/// Hashes of the consecutive word `k`-grams of `text`, sorted and deduplicated.
/// Texts with fewer than `k` words yield one shingle covering the whole text.
pub fn shingle(text: &str, k: usize) -> Result<Vec<u64>> {
    if k == 0 {
        return Err(Error::param("shingle_k", "must be >= 1"));
    }
    let words: Vec<&str> = text.split_whitespace().collect();
    let mut out: Vec<u64> = if words.len() < k {
        vec![stable_hash64(words.join(" ").as_bytes())]
    } else {
        let mut buf = String::new();
        words
            .windows(k)
            .map(|w| {
                buf.clear();
                for (i, t) in w.iter().enumerate() {
                    if i > 0 {
                        buf.push(' ');
                    }
                    buf.push_str(t);
                }
                stable_hash64(buf.as_bytes())
            })
            .collect()
    };
    out.sort_unstable();
    out.dedup();
    Ok(out)
}

/// Exact Jaccard similarity of two sorted, deduplicated sets.
pub fn jaccard(a: &[u64], b: &[u64]) -> f64 {
    if a.is_empty() && b.is_empty() {
        return 1.0;
    }
    let (mut i, mut j, mut inter) = (0, 0, 0usize);
    while i < a.len() && j < b.len() {
        match a[i].cmp(&b[j]) {
            std::cmp::Ordering::Less => i += 1,
            std::cmp::Ordering::Greater => j += 1,
            std::cmp::Ordering::Equal => {
                inter += 1;
                i += 1;
                j += 1;
            }
        }
    }
    inter as f64 / (a.len() + b.len() - inter) as f64
}

/// Per-row seeds of one signature family.
pub fn perm_seeds(num_perm: usize, seed: u64) -> Vec<u64> {
    (0..num_perm as u64).map(|i| mix_seeds(&[seed, i])).collect()
}

/// `values[i] = min over shingles of mix64(shingle ^ seeds[i])`.
pub fn minhash_with(shingles: &[u64], seeds: &[u64]) -> Result<Vec<u64>> {
    if shingles.is_empty() {
        return Err(Error::Precondition("minhash of an empty shingle set".into()));
    }
    let mut values = vec![u64::MAX; seeds.len()];
    for &x in shingles {
        for (v, &s) in values.iter_mut().zip(seeds) {
            let h = mix64(x ^ s);
            if h < *v {
                *v = h;
            }
        }
    }
    Ok(values)
}

pub fn minhash(shingles: &[u64], num_perm: usize, seed: u64) -> Result<Vec<u64>> {
    if num_perm == 0 {
        return Err(Error::param("num_perm", "must be >= 1"));
    }
    minhash_with(shingles, &perm_seeds(num_perm, seed))
}

/// Fraction of positions where two signatures agree.
pub fn estimated_jaccard(a: &[u64], b: &[u64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    let same = a.iter().zip(b).filter(|(x, y)| x == y).count();
    same as f64 / a.len() as f64
}

/// One key per band of `b` consecutive rows.
pub fn band_keys(signature: &[u64], b: usize) -> Vec<u64> {
    signature.chunks_exact(b).map(band_key).collect()
}

fn band_key(rows: &[u64]) -> u64 {
    let mut bytes = Vec::with_capacity(rows.len() * 8);
    for r in rows {
        bytes.extend_from_slice(&r.to_le_bytes());
    }
    stable_hash64(&bytes)
}
