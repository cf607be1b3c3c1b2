//! LSH parameter planning under a memory budget.
//!
//! Notation follows the collision formula used throughout this module:
//! `b` is the number of rows per band and `r` the number of bands, so a pair
//! at Jaccard `s` collides in one pass with probability `1 - (1 - s^b)^r`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Bytes per band-table entry: 8-byte band key plus 8-byte document reference.
pub const ENTRY_BYTES: u64 = 16;
/// Open-addressing tables keep this many slots per stored entry.
pub const TABLE_OVERHEAD: f64 = 1.5;
pub const DEFAULT_ROWS_PER_BAND: usize = 8;
pub const DEFAULT_SHINGLE_K: usize = 5;
pub const DEFAULT_MAX_BANDS: usize = 256;
/// Plans needing more passes than this are rejected as impractical.
pub const MAX_PASSES: u32 = 10_000;

/// Probability that a pair at Jaccard `s` shares at least one band bucket.
pub fn collision_probability(s: f64, b: usize, r: usize) -> f64 {
    1.0 - (1.0 - s.powi(b as i32)).powi(r as i32)
}

/// Probability of being found in at least one of `t` independent passes.
pub fn multi_pass_recall(p: f64, t: u32) -> f64 {
    1.0 - (1.0 - p).powi(t as i32)
}

/// Estimated band-table bytes for `r` bands over `n` documents.
pub fn estimated_bytes(r: usize, n: u64) -> u64 {
    (r as f64 * n as f64 * ENTRY_BYTES as f64 * TABLE_OVERHEAD).ceil() as u64
}

/// Smallest pass count whose recall reaches `target`.
pub fn passes_for(p: f64, target: f64) -> Option<u32> {
    if p >= 1.0 {
        return Some(1);
    }
    if p <= 0.0 {
        return None;
    }
    let guess = ((1.0 - target).ln() / (1.0 - p).ln()).ceil().max(1.0);
    if !guess.is_finite() || guess > MAX_PASSES as f64 + 1.0 {
        return None;
    }
    // the closed form can be off by one in floating point
    let mut t = (guess as u32).saturating_sub(1).max(1);
    while multi_pass_recall(p, t) < target {
        t += 1;
        if t > MAX_PASSES {
            return None;
        }
    }
    Some(t)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlanRequest {
    pub doc_count: u64,
    pub memory_budget_bytes: u64,
    #[serde(default = "default_jaccard")]
    pub jaccard_threshold: f64,
    #[serde(default = "default_recall")]
    pub target_recall: f64,
    #[serde(default = "default_b")]
    pub rows_per_band: usize,
    #[serde(default = "default_k")]
    pub shingle_k: usize,
    /// Upper bound on `r`; large budgets otherwise yield signatures of
    /// thousands of rows with no practical recall gain.
    #[serde(default = "default_max_bands")]
    pub max_bands: usize,
    #[serde(default)]
    pub seed: u64,
    /// Documents kept per duplicate cluster, in corpus order.
    #[serde(default = "default_keep")]
    pub keep_per_cluster: usize,
}

fn default_jaccard() -> f64 {
    0.8
}
fn default_recall() -> f64 {
    0.95
}
fn default_b() -> usize {
    DEFAULT_ROWS_PER_BAND
}
fn default_k() -> usize {
    DEFAULT_SHINGLE_K
}
fn default_max_bands() -> usize {
    DEFAULT_MAX_BANDS
}
fn default_keep() -> usize {
    1
}

impl PlanRequest {
    pub fn new(doc_count: u64, memory_budget_bytes: u64) -> Self {
        PlanRequest {
            doc_count,
            memory_budget_bytes,
            jaccard_threshold: default_jaccard(),
            target_recall: default_recall(),
            rows_per_band: default_b(),
            shingle_k: default_k(),
            max_bands: default_max_bands(),
            seed: 0,
            keep_per_cluster: 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DedupPlan {
    pub jaccard_threshold: f64,
    pub b: usize,
    pub r: usize,
    pub passes: u32,
    pub shingle_k: usize,
    pub num_perm: usize,
    pub memory_budget_bytes: u64,
    pub corpus_doc_count: u64,
    pub estimated_bytes: u64,
    pub predicted_collision_prob: f64,
    pub predicted_recall: f64,
    pub seed: u64,
    pub keep_per_cluster: usize,
}

impl DedupPlan {
    pub fn validate(&self) -> Result<()> {
        if !(self.jaccard_threshold > 0.0 && self.jaccard_threshold <= 1.0) {
            return Err(Error::param("jaccard_threshold", "must be in (0, 1]"));
        }
        if self.b == 0 || self.r == 0 || self.passes == 0 || self.shingle_k == 0 || self.keep_per_cluster == 0 {
            return Err(Error::param("plan", "b, r, passes, shingle_k and keep_per_cluster must be >= 1"));
        }
        if self.num_perm != self.b * self.r {
            return Err(Error::param("num_perm", "must equal b * r"));
        }
        Ok(())
    }
}

/// Largest `r` whose band tables fit the budget, then the fewest passes
/// reaching the target recall at the threshold.
pub fn plan(req: &PlanRequest) -> Result<DedupPlan> {
    let n = req.doc_count;
    let s = req.jaccard_threshold;
    if n == 0 {
        return Err(Error::param("doc_count", "must be >= 1"));
    }
    if !(s > 0.0 && s < 1.0) {
        return Err(Error::param("jaccard_threshold", "must be in (0, 1)"));
    }
    if !(req.target_recall > 0.0 && req.target_recall < 1.0) {
        return Err(Error::param("target_recall", "must be in (0, 1)"));
    }
    if req.rows_per_band == 0 {
        return Err(Error::param("rows_per_band", "must be >= 1"));
    }
    if req.shingle_k == 0 {
        return Err(Error::param("shingle_k", "must be >= 1"));
    }
    if req.max_bands == 0 {
        return Err(Error::param("max_bands", "must be >= 1"));
    }
    if req.keep_per_cluster == 0 {
        return Err(Error::param("keep_per_cluster", "must be >= 1"));
    }
    let min_budget = estimated_bytes(1, n);
    if req.memory_budget_bytes < min_budget {
        return Err(Error::param(
            "memory_budget_bytes",
            format!(
                "budget {} is below the minimum feasible {min_budget} bytes (one band over {n} documents)",
                req.memory_budget_bytes
            ),
        ));
    }
    let per_band = ENTRY_BYTES as f64 * TABLE_OVERHEAD * n as f64;
    let mut r = ((req.memory_budget_bytes as f64 / per_band).floor() as usize).clamp(1, req.max_bands);
    while r > 1 && estimated_bytes(r, n) > req.memory_budget_bytes {
        r -= 1;
    }
    let b = req.rows_per_band;
    let p = collision_probability(s, b, r);
    let passes = passes_for(p, req.target_recall).ok_or_else(|| {
        Error::param(
            "target_recall",
            format!("unreachable within {MAX_PASSES} passes at P = {p:.3e}; raise the budget or lower rows_per_band"),
        )
    })?;
    Ok(DedupPlan {
        jaccard_threshold: s,
        b,
        r,
        passes,
        shingle_k: req.shingle_k,
        num_perm: b * r,
        memory_budget_bytes: req.memory_budget_bytes,
        corpus_doc_count: n,
        estimated_bytes: estimated_bytes(r, n),
        predicted_collision_prob: p,
        predicted_recall: multi_pass_recall(p, passes),
        seed: req.seed,
        keep_per_cluster: req.keep_per_cluster,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn collision_formula() {
        assert_eq!(collision_probability(1.0, 8, 3), 1.0);
        assert_eq!(collision_probability(0.0, 8, 3), 0.0);
        let p = collision_probability(0.8, 8, 16);
        let oracle = 1.0 - (1.0 - 0.8f64.powf(8.0)).powf(16.0);
        assert!((p - oracle).abs() < 1e-15);
        assert!((p - 0.947).abs() < 5e-4, "{p}");
    }

    #[test]
    fn passes_suggestion() {
        assert_eq!(passes_for(0.5, 0.7), Some(2));
        assert_eq!(passes_for(0.5, 0.75), Some(2));
        assert_eq!(passes_for(0.5, 0.76), Some(3));
        assert_eq!(passes_for(1.0, 0.99), Some(1));
        assert_eq!(passes_for(0.0, 0.5), None);
    }

    #[test]
    fn planner_picks_largest_fitting_r() {
        let n = 1000;
        let mut req = PlanRequest::new(n, estimated_bytes(16, n));
        let p = plan(&req).unwrap();
        assert_eq!(p.r, 16);
        assert_eq!(p.num_perm, 128);
        assert!(p.estimated_bytes <= req.memory_budget_bytes);
        req.memory_budget_bytes -= 1;
        assert_eq!(plan(&req).unwrap().r, 15);
        req.memory_budget_bytes = u64::MAX / 2;
        assert_eq!(plan(&req).unwrap().r, DEFAULT_MAX_BANDS);
    }

    #[test]
    fn small_budget_names_the_minimum() {
        let req = PlanRequest::new(1000, 100);
        let err = plan(&req).unwrap_err().to_string();
        assert!(err.contains("24000"), "{err}");
    }

    #[test]
    fn recall_meets_target() {
        let mut req = PlanRequest::new(10_000, estimated_bytes(2, 10_000));
        req.target_recall = 0.9;
        let p = plan(&req).unwrap();
        assert!(p.predicted_recall >= 0.9);
        assert!(multi_pass_recall(p.predicted_collision_prob, p.passes - 1) < 0.9);
    }
}
