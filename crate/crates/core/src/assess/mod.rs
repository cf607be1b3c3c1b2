//! Corpus assessment: lexical, semantic, topic, knowledge and perplexity
//! metrics over a seeded sample, plus local ratings by people and an LLM
//! judge, gathered into overlayable reports.

pub mod knowledge;
pub mod llm;
pub mod mtld;
pub mod ratings;
pub mod report;
pub mod semantic;
pub mod vectors;

pub use report::{build_report, overlay, AssessConfig, AssessmentReport, Metric, Overlay};
