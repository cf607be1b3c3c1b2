//! Typed job configurations and their execution against the core library.

use oasis_core::assess::llm::{self, Budget, EndpointConfig, EvalOptions, HttpChatClient, PromptTemplate};
use oasis_core::assess::report::{build_report, save_report, AssessConfig};
use oasis_core::dedup::{self, PlanRequest};
use oasis_core::lm::{self, LmConfig, NGramModel};
use oasis_core::quality::{self, recipe::dataset_dir, ClassifierModel, Hyperparams, QualityRecipe};
use oasis_core::rules::{run_pipeline, CompiledPipeline, PipelineSpec};
use oasis_core::{text, Error, Monitor};
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::error::{from_value, ApiError, ApiResult};
use crate::jobs::JobKind;
use crate::layout;
use crate::App;

fn default_jobs() -> usize {
    4
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RuleRunConfig {
    pub corpus: String,
    /// Inline pipeline; alternatively `pipeline_id` of a saved one.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pipeline: Option<PipelineSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pipeline_id: Option<String>,
    pub out: String,
    #[serde(default = "default_jobs")]
    pub jobs: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LmTrainConfig {
    pub corpus: String,
    /// Model name; stored as `models/lm/<out>.lm`.
    pub out: String,
    #[serde(default)]
    pub lm: LmConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LmScoreConfig {
    pub corpus: String,
    pub model: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct QualityBuildConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub recipe: Option<QualityRecipe>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub recipe_id: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct QualityTrainConfig {
    pub dataset: String,
    /// Classifier name; stored as `models/quality/<out>.bin`.
    pub out: String,
    #[serde(default)]
    pub hyperparams: Hyperparams,
}

fn default_threshold() -> f64 {
    0.5
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct QualityRunConfig {
    pub corpus: String,
    pub model: String,
    #[serde(default = "default_threshold")]
    pub threshold: f64,
    pub out: String,
}

fn default_budget() -> u64 {
    1 << 30
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DedupRunConfig {
    pub corpus: String,
    pub out: String,
    #[serde(default = "default_budget")]
    pub memory_budget_bytes: u64,
    #[serde(default = "dedup_defaults::jaccard")]
    pub jaccard_threshold: f64,
    #[serde(default = "dedup_defaults::recall")]
    pub target_recall: f64,
    #[serde(default = "dedup_defaults::b")]
    pub rows_per_band: usize,
    #[serde(default = "dedup_defaults::k")]
    pub shingle_k: usize,
    #[serde(default = "dedup_defaults::max_bands")]
    pub max_bands: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "dedup_defaults::keep")]
    pub keep_per_cluster: usize,
    /// Overrides the planner's pass count.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub passes: Option<u32>,
}

mod dedup_defaults {
    use oasis_core::dedup::PlanRequest;

    fn base() -> PlanRequest {
        PlanRequest::new(1, 1)
    }
    pub fn jaccard() -> f64 {
        base().jaccard_threshold
    }
    pub fn recall() -> f64 {
        base().target_recall
    }
    pub fn b() -> usize {
        base().rows_per_band
    }
    pub fn k() -> usize {
        base().shingle_k
    }
    pub fn max_bands() -> usize {
        base().max_bands
    }
    pub fn keep() -> usize {
        base().keep_per_cluster
    }
}

impl DedupRunConfig {
    pub fn new(corpus: &str, out: &str) -> Self {
        from_value(json!({ "corpus": corpus, "out": out })).expect("defaults deserialize")
    }

    pub fn plan_request(&self, doc_count: u64) -> PlanRequest {
        PlanRequest {
            doc_count,
            memory_budget_bytes: self.memory_budget_bytes,
            jaccard_threshold: self.jaccard_threshold,
            target_recall: self.target_recall,
            rows_per_band: self.rows_per_band,
            shingle_k: self.shingle_k,
            max_bands: self.max_bands,
            seed: self.seed,
            keep_per_cluster: self.keep_per_cluster,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AssessRunConfig {
    pub corpus: String,
    #[serde(default)]
    pub config: AssessConfig,
}

fn default_llm_sample() -> usize {
    50
}
fn default_max_requests() -> u64 {
    1000
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LlmEvalConfig {
    pub corpus: String,
    #[serde(default = "default_llm_sample")]
    pub sample: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub prompt: PromptTemplate,
    pub endpoint: EndpointConfig,
    #[serde(default = "default_max_requests")]
    pub max_requests: u64,
    #[serde(default)]
    pub options: EvalOptions,
}

/// A job's kind together with its validated configuration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "config", rename_all = "snake_case")]
pub enum JobSpec {
    RuleRun(RuleRunConfig),
    LmTrain(LmTrainConfig),
    LmScore(LmScoreConfig),
    QualityBuild(QualityBuildConfig),
    QualityTrain(QualityTrainConfig),
    QualityRun(QualityRunConfig),
    DedupRun(DedupRunConfig),
    AssessRun(AssessRunConfig),
    LlmEval(LlmEvalConfig),
}

fn prefixed(e: ApiError) -> ApiError {
    match e.code.as_str() {
        "schema" => {
            let path = e.detail["path"].as_str().unwrap_or(".");
            let full = if path == "." {
                "config".to_string()
            } else {
                format!("config.{path}")
            };
            ApiError {
                message: e.message.replacen(&format!("`{path}`"), &format!("`{full}`"), 1),
                detail: json!({ "path": full }),
                ..e
            }
        }
        _ => e,
    }
}

impl JobSpec {
    /// Parses `config` against the schema of `kind`; errors name the field
    /// path, rooted at `config`.
    pub fn parse(kind: JobKind, config: Value) -> ApiResult<Self> {
        let spec = match kind {
            JobKind::RuleRun => JobSpec::RuleRun(from_value(config).map_err(prefixed)?),
            JobKind::LmTrain => JobSpec::LmTrain(from_value(config).map_err(prefixed)?),
            JobKind::LmScore => JobSpec::LmScore(from_value(config).map_err(prefixed)?),
            JobKind::QualityBuild => JobSpec::QualityBuild(from_value(config).map_err(prefixed)?),
            JobKind::QualityTrain => JobSpec::QualityTrain(from_value(config).map_err(prefixed)?),
            JobKind::QualityRun => JobSpec::QualityRun(from_value(config).map_err(prefixed)?),
            JobKind::DedupRun => JobSpec::DedupRun(from_value(config).map_err(prefixed)?),
            JobKind::AssessRun => JobSpec::AssessRun(from_value(config).map_err(prefixed)?),
            JobKind::LlmEval => JobSpec::LlmEval(from_value(config).map_err(prefixed)?),
        };
        Ok(spec)
    }

    pub fn kind(&self) -> JobKind {
        match self {
            JobSpec::RuleRun(_) => JobKind::RuleRun,
            JobSpec::LmTrain(_) => JobKind::LmTrain,
            JobSpec::LmScore(_) => JobKind::LmScore,
            JobSpec::QualityBuild(_) => JobKind::QualityBuild,
            JobSpec::QualityTrain(_) => JobKind::QualityTrain,
            JobSpec::QualityRun(_) => JobKind::QualityRun,
            JobSpec::DedupRun(_) => JobKind::DedupRun,
            JobSpec::AssessRun(_) => JobKind::AssessRun,
            JobSpec::LlmEval(_) => JobKind::LlmEval,
        }
    }

    pub fn config(&self) -> Value {
        serde_json::to_value(self).expect("job spec serializes")["config"].take()
    }

    pub fn config_hash(&self) -> String {
        text::config_hash(self)
    }

    /// Replaces saved-config references by their contents so that the
    /// config hash covers what will actually run.
    pub fn resolve(mut self, app: &App) -> ApiResult<Self> {
        match &mut self {
            JobSpec::RuleRun(c) => match (&c.pipeline, c.pipeline_id.take()) {
                (Some(_), Some(_)) => {
                    return Err(ApiError::bad_request(
                        "config.pipeline_id",
                        "give `pipeline` or `pipeline_id`, not both",
                    ))
                }
                (None, Some(id)) => c.pipeline = Some(app.pipelines.get(&id)?),
                (None, None) => {
                    return Err(ApiError::bad_request(
                        "config.pipeline",
                        "missing field `pipeline` (or `pipeline_id`)",
                    ))
                }
                (Some(_), None) => {}
            },
            JobSpec::QualityBuild(c) => match (&c.recipe, c.recipe_id.take()) {
                (Some(_), Some(_)) => return Err(ApiError::bad_request("config.recipe_id", "give `recipe` or `recipe_id`, not both")),
                (None, Some(id)) => c.recipe = Some(app.recipes.get(&id)?),
                (None, None) => return Err(ApiError::bad_request("config.recipe", "missing field `recipe` (or `recipe_id`)")),
                (Some(_), None) => {}
            },
            _ => {}
        }
        Ok(self)
    }

    /// The resource this job writes; two live jobs may not share one.
    pub fn output(&self) -> String {
        match self {
            JobSpec::RuleRun(c) => format!("corpus:{}", c.out),
            JobSpec::QualityRun(c) => format!("corpus:{}", c.out),
            JobSpec::DedupRun(c) => format!("corpus:{}", c.out),
            JobSpec::LmTrain(c) => format!("lm-model:{}", c.out),
            JobSpec::LmScore(c) => format!("lm-scores:{}/{}", c.model, c.corpus),
            JobSpec::QualityBuild(c) => format!("dataset:{}", c.recipe.as_ref().map_or("", |r| r.name.as_str())),
            JobSpec::QualityTrain(c) => format!("classifier:{}", c.out),
            JobSpec::AssessRun(c) => format!("report:{}", c.corpus),
            JobSpec::LlmEval(c) => format!("llm-log:{}", c.corpus),
        }
    }

    /// Checks that can fail before any work starts: inputs exist, outputs
    /// are free, parameters are in range.
    pub fn validate(&self, app: &App) -> ApiResult<()> {
        let store = &app.store;
        match self {
            JobSpec::RuleRun(c) => {
                store.get(&c.corpus)?;
                store.ensure_name_free(&c.out)?;
                if c.jobs == 0 {
                    return Err(ApiError::bad_request("config.jobs", "must be >= 1"));
                }
                let pipeline = c
                    .pipeline
                    .as_ref()
                    .ok_or_else(|| ApiError::bad_request("config.pipeline", "unresolved pipeline"))?;
                if pipeline.cells.is_empty() {
                    return Err(ApiError::bad_request("config.pipeline.cells", "pipeline has no cells"));
                }
                CompiledPipeline::compile(pipeline)?;
            }
            JobSpec::LmTrain(c) => {
                store.get(&c.corpus)?;
                oasis_core::corpus::validate_name(&c.out)?;
            }
            JobSpec::LmScore(c) => {
                store.get(&c.corpus)?;
                if !layout::abs(store, &layout::lm_model_rel(&c.model)).exists() {
                    return Err(ApiError::not_found(format!("lm model `{}`", c.model)));
                }
            }
            JobSpec::QualityBuild(c) => {
                let recipe = c
                    .recipe
                    .as_ref()
                    .ok_or_else(|| ApiError::bad_request("config.recipe", "unresolved recipe"))?;
                recipe.validate()?;
                if dataset_dir(store, &recipe.name).exists() {
                    return Err(Error::NameTaken(recipe.name.clone()).into());
                }
            }
            JobSpec::QualityTrain(c) => {
                oasis_core::corpus::validate_name(&c.out)?;
                if !dataset_dir(store, &c.dataset).exists() {
                    return Err(ApiError::not_found(format!("dataset `{}`", c.dataset)));
                }
                c.hyperparams.features.validate()?;
            }
            JobSpec::QualityRun(c) => {
                store.get(&c.corpus)?;
                store.ensure_name_free(&c.out)?;
                if !(0.0..=1.0).contains(&c.threshold) {
                    return Err(ApiError::bad_request("config.threshold", "must be in [0, 1]"));
                }
                if !layout::abs(store, &layout::classifier_rel(&c.model)).exists() {
                    return Err(ApiError::not_found(format!("classifier `{}`", c.model)));
                }
            }
            JobSpec::DedupRun(c) => {
                let handle = store.get(&c.corpus)?;
                store.ensure_name_free(&c.out)?;
                dedup::plan(&c.plan_request(handle.doc_count.max(1)))?;
            }
            JobSpec::AssessRun(c) => {
                store.get(&c.corpus)?;
                c.config.validate()?;
            }
            JobSpec::LlmEval(c) => {
                store.get(&c.corpus)?;
                c.prompt.validate()?;
                if c.sample == 0 {
                    return Err(ApiError::bad_request("config.sample", "must be >= 1"));
                }
            }
        }
        Ok(())
    }

    /// Runs the job to completion. Returns the name of the produced
    /// artifact and a JSON result summary.
    pub fn execute(&self, app: &App, monitor: &dyn Monitor) -> ApiResult<(String, Value)> {
        let store = &app.store;
        match self {
            JobSpec::RuleRun(c) => {
                let spec = c
                    .pipeline
                    .as_ref()
                    .ok_or_else(|| ApiError::bad_request("config.pipeline", "unresolved pipeline"))?;
                let compiled = CompiledPipeline::compile(spec)?;
                let run = run_pipeline(store, &compiled, &c.corpus, &c.out, c.jobs, monitor)?;
                Ok((c.out.clone(), to_json(&run)))
            }
            JobSpec::LmTrain(c) => {
                let handle = store.get(&c.corpus)?;
                let model = NGramModel::train_corpus(store, &handle, c.lm, monitor)?;
                let rel = layout::lm_model_rel(&c.out);
                let path = layout::abs(store, &rel);
                std::fs::create_dir_all(path.parent().unwrap()).map_err(|e| Error::io(&path, e))?;
                model.save(&path)?;
                Ok((
                    c.out.clone(),
                    json!({ "model": c.out, "path": rel, "order": model.order(), "vocab": model.vocab_len() }),
                ))
            }
            JobSpec::LmScore(c) => {
                let model = NGramModel::load(&layout::abs(store, &layout::lm_model_rel(&c.model)))?;
                let handle = store.get(&c.corpus)?;
                let scores = lm::score_corpus(store, &handle, &model, monitor)?;
                monitor.checkpoint()?;
                let rel = layout::lm_scores_rel(&c.model, &c.corpus);
                lm::write_scores(&layout::abs(store, &rel), &scores)?;
                let finite: Vec<f64> = scores.iter().map(|s| s.ppl).filter(|p| p.is_finite()).collect();
                Ok((
                    rel.clone(),
                    json!({ "scores": rel, "documents": scores.len(), "finite": finite.len() }),
                ))
            }
            JobSpec::QualityBuild(c) => {
                let recipe = c
                    .recipe
                    .as_ref()
                    .ok_or_else(|| ApiError::bad_request("config.recipe", "unresolved recipe"))?;
                let ds = quality::build_dataset(store, recipe, monitor)?;
                Ok((recipe.name.clone(), to_json(&ds.summary)))
            }
            JobSpec::QualityTrain(c) => {
                let ds = quality::load_dataset(store, &c.dataset)?;
                monitor.progress(0.1, "dataset loaded");
                let mut model = ClassifierModel::train(&ds.train_examples(), &ds.valid_examples(), &c.hyperparams)?;
                monitor.checkpoint()?;
                model.meta.dataset = c.dataset.clone();
                model.meta.recipe_hash = ds.summary.recipe_hash.clone();
                let rel = layout::classifier_rel(&c.out);
                let path = layout::abs(store, &rel);
                std::fs::create_dir_all(path.parent().unwrap()).map_err(|e| Error::io(&path, e))?;
                model.save(&path)?;
                Ok((c.out.clone(), json!({ "model": c.out, "path": rel, "meta": to_json(&model.meta) })))
            }
            JobSpec::QualityRun(c) => {
                let model = ClassifierModel::load(&layout::abs(store, &layout::classifier_rel(&c.model)))?;
                let run = quality::filter(store, &c.corpus, &model, c.threshold, &c.out, &text::config_hash(c), monitor)?;
                Ok((c.out.clone(), to_json(&run)))
            }
            JobSpec::DedupRun(c) => {
                let handle = store.get(&c.corpus)?;
                let mut plan = dedup::plan(&c.plan_request(handle.doc_count.max(1)))?;
                if let Some(p) = c.passes {
                    plan.passes = p;
                    plan.predicted_recall = dedup::multi_pass_recall(plan.predicted_collision_prob, p);
                }
                let run = dedup::run_dedup(store, &c.corpus, &plan, &c.out, monitor)?;
                Ok((
                    c.out.clone(),
                    json!({
                        "plan": to_json(&plan),
                        "corpus": to_json(&run.corpus),
                        "total": run.total,
                        "removed": run.removed,
                        "removal_rate": run.removal_rate,
                        "passes": to_json(&run.passes),
                        "edges": run.graph.edges.len(),
                    }),
                ))
            }
            JobSpec::AssessRun(c) => {
                let report = build_report(store, &c.corpus, &c.config, monitor)?;
                let path = save_report(store, &report)?;
                Ok((c.corpus.clone(), json!({ "report": path, "sample_size": report.sample_size })))
            }
            JobSpec::LlmEval(c) => {
                let handle = store.get(&c.corpus)?;
                let docs = store.sample(&handle, c.sample, c.seed)?;
                let client = HttpChatClient::new(c.endpoint.clone())?;
                let budget = Budget::new(c.max_requests);
                let run = llm::llm_evaluate(&docs, &c.corpus, &c.prompt, &client, &budget, &c.options, monitor)?;
                llm::append_records(store, &c.corpus, &run.records)?;
                Ok((
                    c.corpus.clone(),
                    json!({
                        "summary": to_json(&run.summary),
                        "records": run.records.len(),
                        "requests": run.requests,
                        "budget_exhausted": run.budget_exhausted,
                    }),
                ))
            }
        }
    }
}

fn to_json<T: Serialize>(v: &T) -> Value {
    serde_json::to_value(v).expect("result serializes")
}
