//! Corpus curation and assessment.
//!
//! Curation stages ([`rules`], [`quality`], [`dedup`]) read and write corpora
//! held in a [`corpus::CorpusStore`]; [`assess`] computes per-corpus metric
//! reports. [`lm`] provides the n-gram perplexity model used by both sides.

pub mod assess;
pub mod corpus;
pub mod dedup;
pub mod error;
pub mod fixtures;
pub mod hist;
pub mod lm;
pub mod monitor;
pub mod quality;
pub mod rules;
pub mod text;

pub use corpus::{CorpusHandle, CorpusStore, Document};
pub use error::{Error, Result};
pub use monitor::{Monitor, Silent};
