//! Standalone runner scripts for saved pipelines.

use serde::{Deserialize, Serialize};

use super::pipeline::PipelineSpec;
use crate::error::{Error, Result};

const CONFIG_BEGIN: &str = "cat > \"$PIPELINE_FILE\" <<'OASIS_PIPELINE_JSON'";
const CONFIG_END: &str = "OASIS_PIPELINE_JSON";

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RuntimeConfig {
    /// CLI binary to invoke.
    #[serde(default = "default_binary")]
    pub binary: String,
    #[serde(default = "default_jobs")]
    pub jobs: usize,
    pub out_name: String,
    /// Exported as `OASIS_DATA_ROOT` when set.
    #[serde(default)]
    pub data_root: Option<String>,
}

fn default_binary() -> String {
    "oasis".into()
}

fn default_jobs() -> usize {
    4
}

fn shell_quote(s: &str) -> String {
    format!("'{}'", s.replace('\'', "'\\''"))
}

/// POSIX shell script that writes the pipeline config to a temp file and
/// invokes `rule run` with it.
pub fn emit_script(pipeline: &PipelineSpec, corpus: &str, runtime: &RuntimeConfig) -> String {
    let mut s = String::new();
    s.push_str("#!/bin/sh\n");
    s.push_str(&format!("# rule pipeline: {} (version {})\n", pipeline.name, pipeline.version));
    s.push_str(&format!("# config-hash: {}\n", pipeline.config_hash()));
    s.push_str(&format!("# input corpus: {corpus} -> output corpus: {}\n", runtime.out_name));
    s.push_str("set -eu\n");
    if let Some(root) = &runtime.data_root {
        s.push_str(&format!("export OASIS_DATA_ROOT={}\n", shell_quote(root)));
    }
    s.push_str("PIPELINE_FILE=\"$(mktemp)\"\n");
    s.push_str("trap 'rm -f \"$PIPELINE_FILE\"' EXIT\n");
    s.push_str(CONFIG_BEGIN);
    s.push('\n');
    s.push_str(&pipeline.to_json());
    s.push('\n');
    s.push_str(CONFIG_END);
    s.push('\n');
    s.push_str(&format!(
        "{} rule run --corpus {} --pipeline \"$PIPELINE_FILE\" --out {} --jobs {}\n",
        shell_quote(&runtime.binary),
        shell_quote(corpus),
        shell_quote(&runtime.out_name),
        runtime.jobs
    ));
    s
}

/// Extracts the embedded pipeline config from a script produced by
/// [`emit_script`].
pub fn parse_script_config(script: &str) -> Result<PipelineSpec> {
    let start = script
        .find(CONFIG_BEGIN)
        .ok_or_else(|| Error::NotFound("pipeline config block".into()))?
        + CONFIG_BEGIN.len();
    let rest = &script[start..];
    let end = rest
        .find(&format!("\n{CONFIG_END}\n"))
        .ok_or_else(|| Error::NotFound("end of pipeline config block".into()))?;
    PipelineSpec::from_json(rest[..end].trim())
}

pub fn script_config_hash(script: &str) -> Option<&str> {
    script.lines().find_map(|l| l.strip_prefix("# config-hash: "))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn runtime() -> RuntimeConfig {
        RuntimeConfig {
            binary: "oasis".into(),
            jobs: 2,
            out_name: "rule_v1".into(),
            data_root: Some("/data/it's here".into()),
        }
    }

    #[test]
    fn embedded_config_round_trips() {
        let spec = PipelineSpec::web_default();
        let script = emit_script(&spec, "raw", &runtime());
        assert_eq!(parse_script_config(&script).unwrap(), spec);
        assert!(script.contains("rule run --corpus 'raw'"));
        assert!(script.contains(r"'/data/it'\''s here'"));
    }

    #[test]
    fn versions_hash_differently() {
        let v1 = PipelineSpec::web_default();
        let mut v2 = v1.clone();
        v2.version = 2;
        let h1 = script_config_hash(&emit_script(&v1, "raw", &runtime())).unwrap().to_string();
        let h2 = script_config_hash(&emit_script(&v2, "raw", &runtime())).unwrap().to_string();
        assert_ne!(h1, h2);
        assert_eq!(h1, v1.config_hash());
    }
}
