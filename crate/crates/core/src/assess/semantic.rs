//! Pairwise-similarity and topic-cluster diversity over document vectors.

use std::collections::HashSet;

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::vectors::{cosine, dot, DocumentVector};
use crate::error::{Error, Result};
use crate::hist::{BinSpec, Histogram, Stats};
use crate::text;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SemanticDiversity {
    pub histogram: Histogram,
    pub pairs: u64,
    pub stats: Stats,
}

/// Histogram of the cosine similarity of every unordered pair of vectors.
pub fn semantic_diversity(vectors: &[DocumentVector], spec: BinSpec) -> Result<SemanticDiversity> {
    if vectors.len() < 2 {
        return Err(Error::Precondition("semantic diversity needs at least 2 documents".into()));
    }
    let sims: Vec<f64> = (0..vectors.len())
        .into_par_iter()
        .flat_map_iter(|i| (i + 1..vectors.len()).map(move |j| cosine(&vectors[i], &vectors[j])))
        .collect();
    Ok(SemanticDiversity {
        histogram: Histogram::from_values(spec, sims.iter().copied())?,
        pairs: sims.len() as u64,
        stats: Stats::of(&sims).expect("at least one pair"),
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct KMeans {
    pub centroids: Vec<Vec<f64>>,
    pub assignments: Vec<usize>,
    pub iterations: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KMeansParams {
    pub k: usize,
    pub seed: u64,
    pub max_iter: usize,
    pub tol: f64,
}

impl KMeansParams {
    pub fn new(k: usize, seed: u64) -> Self {
        KMeansParams {
            k,
            seed,
            max_iter: 100,
            tol: 1e-4,
        }
    }
}

fn sq_norm_dense(c: &[f64]) -> f64 {
    c.iter().map(|x| x * x).sum()
}

fn sparse_dense_dot(x: &[(u32, f32)], c: &[f64]) -> f64 {
    x.iter().map(|&(i, v)| v as f64 * c[i as usize]).sum()
}

/// Squared Euclidean distance between a sparse point and a dense centroid
/// whose squared norm is `c_sq`.
fn dist2(x: &DocumentVector, x_sq: f64, c: &[f64], c_sq: f64) -> f64 {
    (x_sq + c_sq - 2.0 * sparse_dense_dot(&x.entries, c)).max(0.0)
}

fn nearest(x: &DocumentVector, x_sq: f64, centroids: &[Vec<f64>], c_sq: &[f64]) -> (usize, f64) {
    let mut best = (0, f64::INFINITY);
    for (j, c) in centroids.iter().enumerate() {
        let d = dist2(x, x_sq, c, c_sq[j]);
        if d < best.1 {
            best = (j, d);
        }
    }
    best
}

/// Number of distinct vectors, compared bit for bit.
pub fn distinct_count(vectors: &[DocumentVector]) -> usize {
    vectors
        .iter()
        .map(|v| v.entries.iter().map(|&(i, x)| (i, x.to_bits())).collect::<Vec<_>>())
        .collect::<HashSet<_>>()
        .len()
}

/// Lloyd's algorithm with k-means++ seeding. Requires `1 <= k <=` the
/// number of distinct vectors. Clusters that empty out keep their previous
/// centroid.
pub fn kmeans(vectors: &[DocumentVector], params: &KMeansParams) -> Result<KMeans> {
    let k = params.k;
    if k == 0 || k > distinct_count(vectors) {
        return Err(Error::param("k", "must be between 1 and the number of distinct vectors"));
    }
    let dim = vectors[0].dim as usize;
    if vectors.iter().any(|v| v.dim as usize != dim) {
        return Err(Error::param("vectors", "mixed dimensions"));
    }
    let sq: Vec<f64> = vectors.iter().map(|v| v.norm().powi(2)).collect();
    let mut rng = text::rng(params.seed);

    let mut centroids: Vec<Vec<f64>> = Vec::with_capacity(k);
    let first = rng.random_range(0..vectors.len());
    centroids.push(vectors[first].to_dense().into_iter().map(f64::from).collect());
    while centroids.len() < k {
        let c_sq: Vec<f64> = centroids.iter().map(|c| sq_norm_dense(c)).collect();
        let d: Vec<f64> = vectors
            .par_iter()
            .zip(&sq)
            .map(|(x, &xs)| nearest(x, xs, &centroids, &c_sq).1)
            .collect();
        let total: f64 = d.iter().sum();
        let mut u = rng.random::<f64>() * total;
        let mut pick = d.iter().rposition(|&x| x > 0.0).expect("distinct vectors remain");
        for (i, &di) in d.iter().enumerate() {
            if di > 0.0 && u < di {
                pick = i;
                break;
            }
            u -= di;
        }
        centroids.push(vectors[pick].to_dense().into_iter().map(f64::from).collect());
    }

    let mut assignments = vec![0usize; vectors.len()];
    let mut iterations = 0;
    for _ in 0..params.max_iter {
        iterations += 1;
        let c_sq: Vec<f64> = centroids.iter().map(|c| sq_norm_dense(c)).collect();
        assignments = vectors
            .par_iter()
            .zip(&sq)
            .map(|(x, &xs)| nearest(x, xs, &centroids, &c_sq).0)
            .collect();
        let mut sums = vec![vec![0.0f64; dim]; k];
        let mut counts = vec![0usize; k];
        for (x, &a) in vectors.iter().zip(&assignments) {
            counts[a] += 1;
            for &(i, v) in &x.entries {
                sums[a][i as usize] += v as f64;
            }
        }
        let mut shift = 0.0f64;
        for j in 0..k {
            if counts[j] == 0 {
                continue;
            }
            let inv = 1.0 / counts[j] as f64;
            let mut moved = 0.0;
            for (c, s) in centroids[j].iter_mut().zip(&sums[j]) {
                let n = s * inv;
                moved += (n - *c).powi(2);
                *c = n;
            }
            shift = shift.max(moved.sqrt());
        }
        if shift < params.tol {
            break;
        }
    }
    Ok(KMeans {
        centroids,
        assignments,
        iterations,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TopicDiversity {
    pub k_requested: usize,
    pub k: usize,
    /// Set when there were fewer distinct vectors than `k_requested`.
    pub k_reduced: bool,
    pub iterations: usize,
    pub cluster_sizes: Vec<usize>,
    /// Cosine similarity between every pair of centroids.
    pub centroid_similarity: Vec<Vec<f64>>,
    /// Mean off-diagonal similarity; lower means more diverse topics.
    /// Absent with a single cluster.
    pub mean_similarity: Option<f64>,
}

fn dense_cosine(a: &[f64], b: &[f64]) -> f64 {
    let (na, nb) = (sq_norm_dense(a).sqrt(), sq_norm_dense(b).sqrt());
    if na == 0.0 || nb == 0.0 {
        return 0.0;
    }
    (a.iter().zip(b).map(|(x, y)| x * y).sum::<f64>() / (na * nb)).clamp(-1.0, 1.0)
}

/// Clusters the vectors and summarizes how similar the cluster centroids
/// are to each other.
pub fn topic_diversity(vectors: &[DocumentVector], k: usize, seed: u64) -> Result<(TopicDiversity, KMeans)> {
    if k < 2 {
        return Err(Error::param("k", "must be >= 2"));
    }
    if vectors.len() < k {
        return Err(Error::Precondition(format!(
            "topic diversity with k = {k} needs at least {k} documents"
        )));
    }
    let distinct = distinct_count(vectors);
    let k_eff = k.min(distinct);
    let km = kmeans(vectors, &KMeansParams::new(k_eff, seed))?;
    let sim: Vec<Vec<f64>> = km
        .centroids
        .iter()
        .map(|a| km.centroids.iter().map(|b| dense_cosine(a, b)).collect())
        .collect();
    let off: Vec<f64> = (0..k_eff)
        .flat_map(|i| (0..k_eff).filter(move |&j| j != i).map(move |j| (i, j)))
        .map(|(i, j)| sim[i][j])
        .collect();
    let mut sizes = vec![0; k_eff];
    for &a in &km.assignments {
        sizes[a] += 1;
    }
    let td = TopicDiversity {
        k_requested: k,
        k: k_eff,
        k_reduced: k_eff < k,
        iterations: km.iterations,
        cluster_sizes: sizes,
        centroid_similarity: sim,
        mean_similarity: (!off.is_empty()).then(|| off.iter().sum::<f64>() / off.len() as f64),
    };
    Ok((td, km))
}

/// Mean pairwise cosine of unit vectors from the norm of their sum:
/// `|sum v|^2 = n + 2 * sum_{i<j} v_i . v_j`.
pub fn mean_pairwise_cosine(unit: &[DocumentVector]) -> Option<f64> {
    let n = unit.len();
    if n < 2 {
        return None;
    }
    // ordered so the float sum below is reproducible
    let mut sum: std::collections::BTreeMap<u32, f64> = std::collections::BTreeMap::new();
    let mut self_dots = 0.0;
    for v in unit {
        self_dots += dot(&v.entries, &v.entries);
        for &(i, x) in &v.entries {
            *sum.entry(i).or_default() += x as f64;
        }
    }
    let total: f64 = sum.values().map(|x| x * x).sum();
    Some((total - self_dots) / (n * (n - 1)) as f64)
}
