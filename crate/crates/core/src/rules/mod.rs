//! Rule filter: ordered pipelines of heuristic cells with per-cell hit
//! statistics, hit-case sampling and runner-script generation.

mod cell;
mod pipeline;
mod script;
pub mod stopwords;

pub use cell::{
    apply_cell, char_ratio, lang_confidence, mean_word_length, CellKind, CompiledCell, Evaluation, Mode, PluginRegistry, RuleCell,
    RulePlugin, Verdict,
};
pub use pipeline::{
    preview, run_pipeline, sample_hits, CellEvent, CellPreview, CellStats, CompiledPipeline, HitCase, PipelinePreview, PipelineRun,
    PipelineSpec,
};
pub use script::{emit_script, parse_script_config, script_config_hash, RuntimeConfig};
