//! Hashed document and entity vectors.

use std::collections::{BTreeMap, HashMap};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::text::{self, seeded_hash64};

pub const DEFAULT_DIMENSION: u32 = 1 << 16;

/// A sparse vector in a `dim`-dimensional space: sorted, distinct indices
/// with their values. Non-empty vectors are L2-normalized; an empty vector
/// is the zero sentinel.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DocumentVector {
    pub doc_id: String,
    pub dim: u32,
    pub entries: Vec<(u32, f32)>,
}

impl DocumentVector {
    pub fn is_zero(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn norm(&self) -> f64 {
        self.entries.iter().map(|&(_, v)| (v as f64).powi(2)).sum::<f64>().sqrt()
    }

    pub fn to_dense(&self) -> Vec<f32> {
        let mut out = vec![0.0; self.dim as usize];
        for &(i, v) in &self.entries {
            out[i as usize] = v;
        }
        out
    }
}

/// Dot product of two sorted sparse vectors.
pub fn dot(a: &[(u32, f32)], b: &[(u32, f32)]) -> f64 {
    let (mut i, mut j, mut s) = (0, 0, 0.0f64);
    while i < a.len() && j < b.len() {
        match a[i].0.cmp(&b[j].0) {
            std::cmp::Ordering::Less => i += 1,
            std::cmp::Ordering::Greater => j += 1,
            std::cmp::Ordering::Equal => {
                s += a[i].1 as f64 * b[j].1 as f64;
                i += 1;
                j += 1;
            }
        }
    }
    s
}

/// Cosine similarity; 0 when either side is the zero vector.
pub fn cosine(a: &DocumentVector, b: &DocumentVector) -> f64 {
    let (na, nb) = (a.norm(), b.norm());
    if na == 0.0 || nb == 0.0 {
        return 0.0;
    }
    (dot(&a.entries, &b.entries) / (na * nb)).clamp(-1.0, 1.0)
}

fn check_dim(dim: u32) -> Result<()> {
    if dim.is_power_of_two() {
        Ok(())
    } else {
        Err(Error::param("dimension", "must be a power of two"))
    }
}

fn bucket(token: &str, dim: u32) -> u32 {
    (seeded_hash64(token.as_bytes(), 0x7466) & (dim as u64 - 1)) as u32
}

fn normalize(map: BTreeMap<u32, f64>) -> Vec<(u32, f32)> {
    let norm = map.values().map(|v| v * v).sum::<f64>().sqrt();
    if norm == 0.0 {
        return Vec::new();
    }
    map.into_iter().map(|(i, v)| (i, (v / norm) as f32)).collect()
}

/// Maps a set of documents to vectors. Implementations may look at the
/// whole set, as TF-IDF does for document frequencies.
pub trait Vectorizer: Sync {
    fn vectorize(&self, docs: &[(&str, &str)]) -> Result<Vec<DocumentVector>>;
}

/// Hashed TF-IDF over lexical tokens, with IDF estimated from the documents
/// being vectorized: `idf = ln((1 + n) / (1 + df)) + 1`.
#[derive(Debug, Clone, Copy)]
pub struct TfIdf {
    pub dim: u32,
}

impl Default for TfIdf {
    fn default() -> Self {
        TfIdf { dim: DEFAULT_DIMENSION }
    }
}

impl Vectorizer for TfIdf {
    fn vectorize(&self, docs: &[(&str, &str)]) -> Result<Vec<DocumentVector>> {
        check_dim(self.dim)?;
        let tf: Vec<BTreeMap<u32, f64>> = docs
            .par_iter()
            .map(|(_, t)| {
                let mut m = BTreeMap::new();
                for tok in text::lexical_tokens(t) {
                    *m.entry(bucket(&tok, self.dim)).or_insert(0.0) += 1.0;
                }
                m
            })
            .collect();
        let mut df: HashMap<u32, usize> = HashMap::new();
        for m in &tf {
            for &k in m.keys() {
                *df.entry(k).or_default() += 1;
            }
        }
        let n = docs.len() as f64;
        Ok(tf
            .into_par_iter()
            .zip(docs.par_iter())
            .map(|(mut m, (id, _))| {
                for (k, v) in m.iter_mut() {
                    *v *= ((1.0 + n) / (1.0 + df[k] as f64)).ln() + 1.0;
                }
                DocumentVector {
                    doc_id: id.to_string(),
                    dim: self.dim,
                    entries: normalize(m),
                }
            })
            .collect())
    }
}

/// Hashed character trigram vector of a short string, padded with spaces
/// at both ends and lowercased.
pub fn char_ngram_vector(s: &str, dim: u32) -> Result<DocumentVector> {
    check_dim(dim)?;
    let padded: Vec<char> = format!(" {} ", s.to_lowercase()).chars().collect();
    let mut m = BTreeMap::new();
    for w in padded.windows(3) {
        let g: String = w.iter().collect();
        *m.entry(bucket(&g, dim)).or_insert(0.0) += 1.0;
    }
    Ok(DocumentVector {
        doc_id: s.to_string(),
        dim,
        entries: normalize(m),
    })
}
