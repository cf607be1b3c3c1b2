//! MinHash/LSH near-duplicate removal with a memory-aware planner.

mod bands;
mod graph;
mod minhash;
mod plan;
mod run;

pub use bands::{candidate_pairs, BandStats, MAX_BUCKET_LINKS};
pub use graph::{load_graph, save_graph, DuplicateGraph, GraphEdge, GraphNode};
pub use minhash::{band_keys, estimated_jaccard, jaccard, minhash, minhash_with, perm_seeds, shingle};
pub use plan::{
    collision_probability, estimated_bytes, multi_pass_recall, passes_for, plan, DedupPlan, PlanRequest, DEFAULT_MAX_BANDS,
    DEFAULT_ROWS_PER_BAND, DEFAULT_SHINGLE_K, ENTRY_BYTES, MAX_PASSES, TABLE_OVERHEAD,
};
pub use run::{pass_seed, run_dedup, DedupRun, PassStats};
