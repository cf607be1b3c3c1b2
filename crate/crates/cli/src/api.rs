//! HTTP API. Every response body is JSON; failures use the
//! `{code, message, detail}` envelope.

use std::collections::HashSet;
use std::path::PathBuf;

use axum::body::Bytes;
use axum::extract::rejection::QueryRejection;
use axum::extract::{Path, Query, State};
use axum::http::{header, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use oasis_core::assess::llm::{load_records, summarize as llm_summary};
use oasis_core::assess::ratings::RatingRecord;
use oasis_core::assess::report::{list_reports, load_report, overlay, reports_dir};
use oasis_core::dedup::{self, load_graph};
use oasis_core::lm::{quantile_boundary, read_scores};
use oasis_core::quality::{recipe::list_datasets, QualityRecipe};
use oasis_core::rules::{emit_script, preview, sample_hits, CompiledCell, CompiledPipeline, PipelineSpec, RuntimeConfig};
use oasis_core::Document;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::error::{from_slice, ApiError, ApiResult};
use crate::exec::{DedupRunConfig, JobSpec, LlmEvalConfig};
use crate::jobs::{JobManager, JobRequest};
use crate::layout::{self, Saved};

/// Documents used by preview endpoints unless the request says otherwise.
pub const PREVIEW_SAMPLE: usize = 1000;

type Ctx = State<JobManager>;

async fn blocking<T, F>(f: F) -> ApiResult<T>
where
    T: Send + 'static,
    F: FnOnce() -> ApiResult<T> + Send + 'static,
{
    tokio::task::spawn_blocking(f)
        .await
        .map_err(|e| ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, "panic", e.to_string(), Value::Null))?
}

fn query<T>(q: Result<Query<T>, QueryRejection>) -> ApiResult<T> {
    q.map(|Query(v)| v)
        .map_err(|e| ApiError::new(StatusCode::BAD_REQUEST, "invalid_query", e.body_text(), Value::Null))
}

fn created<T: Serialize>(body: T) -> Response {
    (StatusCode::CREATED, Json(body)).into_response()
}

fn body<T: DeserializeOwned>(bytes: &Bytes) -> ApiResult<T> {
    from_slice(bytes)
}

pub fn router(jobs: JobManager, ui_dir: Option<PathBuf>) -> Router {
    let api = Router::new()
        .route("/health", get(|| async { Json(json!({ "status": "ok" })) }))
        .route("/corpora", get(list_corpora).post(ingest))
        .route("/corpora/{name}", get(get_corpus))
        .route("/corpora/{name}/sample", get(sample))
        .route("/pipelines", get(list_pipelines).post(create_pipeline))
        .route("/pipelines/{id}", get(get_pipeline).put(put_pipeline).delete(delete_pipeline))
        .route("/pipelines/{id}/preview", post(preview_pipeline))
        .route("/pipelines/{id}/sample-hits", post(pipeline_sample_hits))
        .route("/pipelines/{id}/script", get(pipeline_script))
        .route("/recipes", get(list_recipes).post(create_recipe))
        .route("/recipes/{id}", get(get_recipe).put(put_recipe).delete(delete_recipe))
        .route("/datasets", get(datasets))
        .route("/datasets/{name}", get(dataset))
        .route("/lm/quantile", get(lm_quantile))
        .route("/jobs", get(list_jobs).post(submit_job))
        .route("/jobs/{id}", get(get_job))
        .route("/jobs/{id}/cancel", post(cancel_job))
        .route("/ratings", post(rate))
        .route("/ratings/summary", get(rating_summary))
        .route("/llm-eval", post(llm_eval))
        .route("/llm-eval/{corpus}", get(llm_results))
        .route("/reports", get(reports))
        .route("/reports/overlay", post(report_overlay))
        .route("/reports/{corpus}", get(report))
        .route("/dedup/plan", post(dedup_plan))
        .route("/dedup/graph", get(dedup_graph))
        .fallback(|| async { ApiError::not_found("route") })
        .with_state(jobs);
    match ui_dir {
        Some(dir) => Router::new()
            .nest("/api", api.clone())
            .merge(api)
            .fallback_service(tower_http::services::ServeDir::new(dir)),
        None => api,
    }
}

// ---- corpora

async fn list_corpora(State(jobs): Ctx) -> Json<Value> {
    Json(json!(jobs.app().store.list()))
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct IngestRequest {
    /// Server-side path or glob of line-delimited JSON files.
    path: String,
    name: String,
    #[serde(default = "default_shard_size")]
    shard_size_bytes: u64,
}

fn default_shard_size() -> u64 {
    64 << 20
}

async fn ingest(State(jobs): Ctx, bytes: Bytes) -> ApiResult<Response> {
    let req: IngestRequest = body(&bytes)?;
    let app = jobs.app().clone();
    let summary = blocking(move || Ok(app.store.ingest(&req.path, &req.name, req.shard_size_bytes)?)).await?;
    Ok(created(summary))
}

async fn get_corpus(State(jobs): Ctx, Path(name): Path<String>) -> ApiResult<Json<Value>> {
    let store = &jobs.app().store;
    Ok(Json(json!({ "corpus": store.get(&name)?, "lineage": store.lineage_chain(&name)? })))
}

#[derive(Deserialize)]
struct SampleQuery {
    #[serde(default = "ten")]
    n: usize,
    #[serde(default)]
    seed: u64,
}

fn ten() -> usize {
    10
}

async fn sample(
    State(jobs): Ctx,
    Path(name): Path<String>,
    q: Result<Query<SampleQuery>, QueryRejection>,
) -> ApiResult<Json<Vec<Document>>> {
    let q = query(q)?;
    let app = jobs.app().clone();
    blocking(move || {
        let handle = app.store.get(&name)?;
        Ok(Json(app.store.sample(&handle, q.n, q.seed)?))
    })
    .await
}

// ---- pipelines

fn check_pipeline(p: &PipelineSpec) -> ApiResult<()> {
    if p.cells.is_empty() {
        return Err(ApiError::bad_request("cells", "pipeline has no cells"));
    }
    CompiledPipeline::compile(p)?;
    Ok(())
}

fn saved_pipeline(id: String, p: PipelineSpec) -> Value {
    json!({ "id": id, "config_hash": p.config_hash(), "pipeline": p })
}

async fn list_pipelines(State(jobs): Ctx) -> ApiResult<Json<Vec<Value>>> {
    let all: Vec<Saved<PipelineSpec>> = jobs.app().pipelines.list()?;
    Ok(Json(all.into_iter().map(|s| saved_pipeline(s.id, s.value)).collect()))
}

async fn create_pipeline(State(jobs): Ctx, bytes: Bytes) -> ApiResult<Response> {
    let p: PipelineSpec = body(&bytes)?;
    check_pipeline(&p)?;
    let id = jobs.app().pipelines.create(&p)?;
    Ok(created(saved_pipeline(id, p)))
}

async fn get_pipeline(State(jobs): Ctx, Path(id): Path<String>) -> ApiResult<Json<Value>> {
    let p: PipelineSpec = jobs.app().pipelines.get(&id)?;
    Ok(Json(saved_pipeline(id, p)))
}

async fn put_pipeline(State(jobs): Ctx, Path(id): Path<String>, bytes: Bytes) -> ApiResult<Json<Value>> {
    let p: PipelineSpec = body(&bytes)?;
    check_pipeline(&p)?;
    jobs.app().pipelines.put(&id, &p)?;
    Ok(Json(saved_pipeline(id, p)))
}

async fn delete_pipeline(State(jobs): Ctx, Path(id): Path<String>) -> ApiResult<StatusCode> {
    jobs.app().pipelines.delete(&id)?;
    Ok(StatusCode::NO_CONTENT)
}

fn five() -> usize {
    5
}
fn preview_n() -> usize {
    PREVIEW_SAMPLE
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct PreviewRequest {
    corpus: String,
    #[serde(default = "preview_n")]
    n: usize,
    #[serde(default)]
    seed: u64,
    #[serde(default = "five")]
    cases: usize,
}

async fn preview_pipeline(State(jobs): Ctx, Path(id): Path<String>, bytes: Bytes) -> ApiResult<Json<Value>> {
    let req: PreviewRequest = body(&bytes)?;
    let app = jobs.app().clone();
    blocking(move || {
        let spec: PipelineSpec = app.pipelines.get(&id)?;
        let compiled = CompiledPipeline::compile(&spec)?;
        let handle = app.store.get(&req.corpus)?;
        let docs = app.store.sample(&handle, req.n, req.seed)?;
        Ok(Json(json!(preview(&compiled, &docs, req.cases, req.seed))))
    })
    .await
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct SampleHitsRequest {
    corpus: String,
    cell_index: usize,
    #[serde(default = "five")]
    n: usize,
    #[serde(default)]
    seed: u64,
}

async fn pipeline_sample_hits(State(jobs): Ctx, Path(id): Path<String>, bytes: Bytes) -> ApiResult<Json<Value>> {
    let req: SampleHitsRequest = body(&bytes)?;
    let app = jobs.app().clone();
    blocking(move || {
        let spec: PipelineSpec = app.pipelines.get(&id)?;
        let cell = spec
            .cells
            .get(req.cell_index)
            .ok_or_else(|| ApiError::bad_request("cell_index", format!("pipeline has {} cells", spec.cells.len())))?;
        let compiled = CompiledCell::compile(cell)?;
        let hits = sample_hits(&compiled, &app.store, &req.corpus, req.n, req.seed)?;
        let out: Vec<Value> = hits.into_iter().map(|(d, v)| json!({ "doc": d, "verdict": v })).collect();
        Ok(Json(json!(out)))
    })
    .await
}

#[derive(Deserialize)]
struct ScriptQuery {
    corpus: String,
    out: String,
    #[serde(default)]
    jobs: Option<usize>,
    #[serde(default)]
    binary: Option<String>,
}

async fn pipeline_script(State(jobs): Ctx, Path(id): Path<String>, q: Result<Query<ScriptQuery>, QueryRejection>) -> ApiResult<Response> {
    let q = query(q)?;
    let spec: PipelineSpec = jobs.app().pipelines.get(&id)?;
    let mut runtime: RuntimeConfig = serde_json::from_value(json!({ "out_name": q.out })).map_err(oasis_core::Error::from)?;
    if let Some(j) = q.jobs {
        runtime.jobs = j;
    }
    if let Some(b) = q.binary {
        runtime.binary = b;
    }
    runtime.data_root = Some(jobs.app().store.root().display().to_string());
    let script = emit_script(&spec, &q.corpus, &runtime);
    Ok(([(header::CONTENT_TYPE, "text/x-shellscript; charset=utf-8")], script).into_response())
}

// ---- recipes and datasets

async fn list_recipes(State(jobs): Ctx) -> ApiResult<Json<Vec<Saved<QualityRecipe>>>> {
    Ok(Json(jobs.app().recipes.list()?))
}

async fn create_recipe(State(jobs): Ctx, bytes: Bytes) -> ApiResult<Response> {
    let r: QualityRecipe = body(&bytes)?;
    r.validate()?;
    let id = jobs.app().recipes.create(&r)?;
    Ok(created(Saved { id, value: r }))
}

async fn get_recipe(State(jobs): Ctx, Path(id): Path<String>) -> ApiResult<Json<Saved<QualityRecipe>>> {
    let value = jobs.app().recipes.get(&id)?;
    Ok(Json(Saved { id, value }))
}

async fn put_recipe(State(jobs): Ctx, Path(id): Path<String>, bytes: Bytes) -> ApiResult<Json<Saved<QualityRecipe>>> {
    let r: QualityRecipe = body(&bytes)?;
    r.validate()?;
    jobs.app().recipes.put(&id, &r)?;
    Ok(Json(Saved { id, value: r }))
}

async fn delete_recipe(State(jobs): Ctx, Path(id): Path<String>) -> ApiResult<StatusCode> {
    jobs.app().recipes.delete(&id)?;
    Ok(StatusCode::NO_CONTENT)
}

async fn datasets(State(jobs): Ctx) -> ApiResult<Json<Vec<String>>> {
    Ok(Json(list_datasets(&jobs.app().store)?))
}

async fn dataset(State(jobs): Ctx, Path(name): Path<String>) -> ApiResult<Json<Value>> {
    let app = jobs.app().clone();
    blocking(move || {
        let ds = oasis_core::quality::load_dataset(&app.store, &name)?;
        Ok(Json(json!({ "recipe": ds.recipe, "summary": ds.summary })))
    })
    .await
}

// ---- perplexity quantile

#[derive(Deserialize)]
struct QuantileQuery {
    model: String,
    #[serde(default = "default_q")]
    q: f64,
    /// Scored corpus; optional when the model scored exactly one.
    #[serde(default)]
    corpus: Option<String>,
    #[serde(default = "three")]
    examples: usize,
}

fn default_q() -> f64 {
    0.85
}
fn three() -> usize {
    3
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BoundaryDoc {
    pub doc_id: String,
    pub ppl: f64,
    pub text: String,
}

/// Threshold at quantile `q` of the stored perplexities, with the
/// documents on either side of it.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct QuantileView {
    pub model: String,
    pub corpus: String,
    pub q: f64,
    pub threshold: f64,
    pub scored: usize,
    /// Documents with perplexity above the threshold.
    pub above: usize,
    pub below_examples: Vec<BoundaryDoc>,
    pub above_examples: Vec<BoundaryDoc>,
}

fn scored_corpora(app: &crate::App, model: &str) -> Vec<String> {
    let dir = layout::lm_scores_dir(&app.store, model);
    let mut out: Vec<String> = std::fs::read_dir(dir)
        .into_iter()
        .flatten()
        .filter_map(|e| e.ok())
        .filter_map(|e| e.file_name().to_str()?.strip_suffix(".jsonl").map(str::to_string))
        .collect();
    out.sort();
    out
}

async fn lm_quantile(State(jobs): Ctx, q: Result<Query<QuantileQuery>, QueryRejection>) -> ApiResult<Json<QuantileView>> {
    let q = query(q)?;
    let app = jobs.app().clone();
    blocking(move || {
        let corpus = match q.corpus {
            Some(c) => c,
            None => {
                let mut all = scored_corpora(&app, &q.model);
                match all.len() {
                    0 => return Err(ApiError::not_found(format!("scores for lm model `{}`", q.model))),
                    1 => all.pop().unwrap(),
                    _ => {
                        return Err(ApiError::bad_request(
                            "corpus",
                            format!("model `{}` scored several corpora: {}", q.model, all.join(", ")),
                        ))
                    }
                }
            }
        };
        let path = layout::abs(&app.store, &layout::lm_scores_rel(&q.model, &corpus));
        if !path.exists() {
            return Err(ApiError::not_found(format!("scores of `{corpus}` under lm model `{}`", q.model)));
        }
        let mut scores = read_scores(&path)?;
        let values: Vec<f64> = scores.iter().map(|s| s.ppl).collect();
        let threshold = quantile_boundary(&values, q.q)?;
        scores.sort_by(|a, b| a.ppl.total_cmp(&b.ppl).then(a.doc_id.cmp(&b.doc_id)));
        let split = scores.partition_point(|s| s.ppl <= threshold);
        let below = &scores[split.saturating_sub(q.examples)..split];
        let above = &scores[split..(split + q.examples).min(scores.len())];
        let wanted: HashSet<&str> = below.iter().chain(above).map(|s| s.doc_id.as_str()).collect();
        let handle = app.store.get(&corpus)?;
        let mut texts = std::collections::HashMap::new();
        for d in app.store.iter_docs(&handle) {
            let d = d?;
            if wanted.contains(d.id.as_str()) {
                texts.insert(d.id, d.text);
            }
        }
        let docs = |slice: &[oasis_core::lm::DocScore]| -> Vec<BoundaryDoc> {
            slice
                .iter()
                .map(|s| BoundaryDoc {
                    doc_id: s.doc_id.clone(),
                    ppl: s.ppl,
                    text: texts.get(&s.doc_id).cloned().unwrap_or_default(),
                })
                .collect()
        };
        Ok(Json(QuantileView {
            model: q.model,
            corpus,
            q: q.q,
            threshold,
            scored: scores.len(),
            above: scores.len() - split,
            below_examples: docs(below),
            above_examples: docs(above),
        }))
    })
    .await
}

// ---- jobs

async fn submit(jobs: &JobManager, spec: JobSpec) -> ApiResult<Response> {
    let jobs = jobs.clone();
    let (job, fresh) = blocking(move || jobs.submit(spec)).await?;
    Ok(if fresh { created(job) } else { Json(job).into_response() })
}

async fn submit_job(State(jobs): Ctx, bytes: Bytes) -> ApiResult<Response> {
    let req: JobRequest = body(&bytes)?;
    submit(&jobs, req.into_spec()?).await
}

async fn list_jobs(State(jobs): Ctx) -> Json<Value> {
    Json(json!(jobs.list()))
}

async fn get_job(State(jobs): Ctx, Path(id): Path<String>) -> ApiResult<Json<Value>> {
    Ok(Json(json!(jobs.get(&id)?)))
}

async fn cancel_job(State(jobs): Ctx, Path(id): Path<String>) -> ApiResult<Json<Value>> {
    Ok(Json(json!(jobs.cancel(&id)?)))
}

// ---- ratings and LLM evaluation

async fn rate(State(jobs): Ctx, bytes: Bytes) -> ApiResult<Response> {
    let record: RatingRecord = body(&bytes)?;
    let app = jobs.app().clone();
    let summary = blocking(move || Ok(app.ratings.record(&app.store, record)?)).await?;
    Ok(created(summary))
}

#[derive(Deserialize)]
struct SummaryQuery {
    #[serde(default)]
    corpus: Option<String>,
    #[serde(default)]
    rater: Option<String>,
}

async fn rating_summary(State(jobs): Ctx, q: Result<Query<SummaryQuery>, QueryRejection>) -> ApiResult<Json<Value>> {
    let q = query(q)?;
    Ok(Json(json!(jobs.app().ratings.summary(q.corpus.as_deref(), q.rater.as_deref()))))
}

async fn llm_eval(State(jobs): Ctx, bytes: Bytes) -> ApiResult<Response> {
    let config: LlmEvalConfig = body(&bytes)?;
    submit(&jobs, JobSpec::LlmEval(config)).await
}

async fn llm_results(State(jobs): Ctx, Path(corpus): Path<String>) -> ApiResult<Json<Value>> {
    let app = jobs.app().clone();
    blocking(move || {
        app.store.get(&corpus)?;
        let records = load_records(&app.store, &corpus)?;
        Ok(Json(json!({ "summary": llm_summary(&records), "records": records })))
    })
    .await
}

// ---- reports

async fn reports(State(jobs): Ctx) -> ApiResult<Json<Value>> {
    let app = jobs.app().clone();
    blocking(move || Ok(Json(json!(list_reports(&app.store)?)))).await
}

fn load_one(app: &crate::App, corpus: &str) -> ApiResult<oasis_core::assess::AssessmentReport> {
    oasis_core::corpus::validate_name(corpus)?;
    let path = reports_dir(&app.store).join(format!("{corpus}.json"));
    if !path.exists() {
        return Err(ApiError::not_found(format!("report for `{corpus}`")));
    }
    Ok(load_report(&path)?)
}

async fn report(State(jobs): Ctx, Path(corpus): Path<String>) -> ApiResult<Json<Value>> {
    let app = jobs.app().clone();
    blocking(move || Ok(Json(json!(load_one(&app, &corpus)?)))).await
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct OverlayRequest {
    corpora: Vec<String>,
}

async fn report_overlay(State(jobs): Ctx, bytes: Bytes) -> ApiResult<Json<Value>> {
    let req: OverlayRequest = body(&bytes)?;
    let app = jobs.app().clone();
    blocking(move || {
        let reports = req.corpora.iter().map(|c| load_one(&app, c)).collect::<ApiResult<Vec<_>>>()?;
        Ok(Json(json!(overlay(&reports)?)))
    })
    .await
}

// ---- dedup

async fn dedup_plan(State(jobs): Ctx, bytes: Bytes) -> ApiResult<Json<Value>> {
    let mut v: Value = body(&bytes)?;
    if let Some(obj) = v.as_object_mut() {
        obj.entry("out").or_insert_with(|| json!("-"));
    }
    let c: DedupRunConfig = crate::error::from_value(v)?;
    let handle = jobs.app().store.get(&c.corpus)?;
    let plan = dedup::plan(&c.plan_request(handle.doc_count.max(1)))?;
    Ok(Json(json!(plan)))
}

#[derive(Deserialize)]
struct GraphQuery {
    corpus: String,
    #[serde(default)]
    min_j: Option<f64>,
}

async fn dedup_graph(State(jobs): Ctx, q: Result<Query<GraphQuery>, QueryRejection>) -> ApiResult<Json<Value>> {
    let q = query(q)?;
    let app = jobs.app().clone();
    blocking(move || {
        app.store.get(&q.corpus)?;
        let g = load_graph(&app.store, &q.corpus)?;
        let g = match q.min_j {
            Some(j) => g.filtered(j),
            None => g,
        };
        Ok(Json(json!(g)))
    })
    .await
}

/// Binds `addr` and serves until the process is interrupted.
pub async fn serve(addr: &str, jobs: JobManager, ui_dir: Option<PathBuf>) -> anyhow::Result<()> {
    let listener = tokio::net::TcpListener::bind(addr).await?;
    log::info!("listening on http://{}", listener.local_addr()?);
    axum::serve(listener, router(jobs, ui_dir))
        .with_graceful_shutdown(async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await?;
    Ok(())
}
