use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use oasis_cli::exec::{
    AssessRunConfig, DedupRunConfig, LlmEvalConfig, LmScoreConfig, LmTrainConfig, QualityBuildConfig, QualityRunConfig, QualityTrainConfig,
    RuleRunConfig,
};
use oasis_cli::{api, layout, App, JobManager, JobSpec};
use oasis_core::assess::ratings::{Rating, RatingRecord};
use oasis_core::assess::report::{load_report, overlay, reports_dir, AssessConfig};
use oasis_core::lm::{quantile_boundary, read_scores, LmConfig};
use oasis_core::quality::Hyperparams;
use oasis_core::rules::{emit_script, preview, sample_hits, CompiledCell, CompiledPipeline, PipelineSpec, RuntimeConfig};
use oasis_core::{dedup, Monitor};
use serde::Serialize;
use serde_json::{json, Value};

#[derive(Parser)]
#[command(name = "oasis", version, about = "Curate and assess text corpora")]
struct Cli {
    /// Directory holding corpora, models, jobs and reports.
    #[arg(long, global = true, env = "OASIS_DATA_ROOT", default_value = "oasis-data")]
    data_root: PathBuf,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the HTTP API and background job workers.
    Serve {
        #[arg(long, default_value = "127.0.0.1:8080")]
        addr: String,
        #[arg(long, default_value_t = 2)]
        workers: usize,
        /// Static files served for paths outside the API.
        #[arg(long)]
        ui_dir: Option<PathBuf>,
    },
    #[command(subcommand)]
    Corpus(CorpusCmd),
    #[command(subcommand)]
    Rule(RuleCmd),
    #[command(subcommand)]
    Lm(LmCmd),
    #[command(subcommand)]
    Quality(QualityCmd),
    #[command(subcommand)]
    Dedup(DedupCmd),
    #[command(subcommand)]
    Assess(AssessCmd),
    /// Inspect and control jobs of a running server.
    #[command(subcommand)]
    Jobs(JobsCmd),
}

#[derive(Subcommand)]
enum CorpusCmd {
    Ingest {
        /// File path or glob of line-delimited JSON records.
        #[arg(long)]
        path: String,
        #[arg(long)]
        name: String,
        #[arg(long, default_value_t = 64 << 20)]
        shard_size: u64,
    },
    List,
    Show {
        name: String,
    },
    Sample {
        #[arg(long)]
        corpus: String,
        #[arg(long, default_value_t = 10)]
        n: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
}

#[derive(Args)]
struct PipelineArgs {
    #[arg(long)]
    corpus: String,
    /// Pipeline config JSON file.
    #[arg(long)]
    pipeline: PathBuf,
}

#[derive(Subcommand)]
enum RuleCmd {
    Run {
        #[command(flatten)]
        p: PipelineArgs,
        #[arg(long)]
        out: String,
        #[arg(long, default_value_t = 4)]
        jobs: usize,
    },
    SampleHits {
        #[command(flatten)]
        p: PipelineArgs,
        #[arg(long)]
        cell_index: usize,
        #[arg(long, default_value_t = 5)]
        n: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Per-cell hit rates and hit cases on a sample.
    Preview {
        #[command(flatten)]
        p: PipelineArgs,
        #[arg(long, default_value_t = api::PREVIEW_SAMPLE)]
        n: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 5)]
        cases: usize,
    },
    /// Print a standalone shell script reproducing `rule run`.
    Script {
        #[command(flatten)]
        p: PipelineArgs,
        #[arg(long)]
        out: String,
        #[arg(long, default_value_t = 4)]
        jobs: usize,
        #[arg(long, default_value = "oasis")]
        binary: String,
    },
}

#[derive(Subcommand)]
enum LmCmd {
    Train {
        #[arg(long)]
        corpus: String,
        #[arg(long)]
        out: String,
        #[arg(long, default_value_t = LmConfig::default().order)]
        order: usize,
    },
    Score {
        #[arg(long)]
        corpus: String,
        #[arg(long)]
        model: String,
    },
    Quantile {
        #[arg(long)]
        model: String,
        #[arg(long)]
        corpus: String,
        #[arg(long, default_value_t = 0.85)]
        q: f64,
    },
}

#[derive(Subcommand)]
enum QualityCmd {
    /// Build a training dataset from a recipe file.
    Build {
        #[arg(long)]
        recipe: PathBuf,
    },
    Train {
        #[arg(long)]
        dataset: String,
        #[arg(long)]
        out: String,
        /// Hyperparameter JSON file; defaults otherwise.
        #[arg(long)]
        config: Option<PathBuf>,
    },
    Run {
        #[arg(long)]
        corpus: String,
        #[arg(long)]
        model: String,
        #[arg(long, default_value_t = 0.5)]
        threshold: f64,
        #[arg(long)]
        out: String,
    },
}

#[derive(Args)]
struct DedupArgs {
    #[arg(long)]
    corpus: String,
    #[arg(long, default_value_t = 1 << 30)]
    memory: u64,
    #[arg(long, default_value_t = 0.8)]
    jaccard: f64,
    #[arg(long, default_value_t = 0.95)]
    recall: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

impl DedupArgs {
    fn config(&self, out: &str) -> DedupRunConfig {
        let mut c = DedupRunConfig::new(&self.corpus, out);
        c.memory_budget_bytes = self.memory;
        c.jaccard_threshold = self.jaccard;
        c.target_recall = self.recall;
        c.seed = self.seed;
        c
    }
}

#[derive(Subcommand)]
enum DedupCmd {
    /// Show the band count and passes chosen for a memory budget.
    Plan {
        #[command(flatten)]
        d: DedupArgs,
    },
    Run {
        #[command(flatten)]
        d: DedupArgs,
        #[arg(long)]
        out: String,
        #[arg(long)]
        passes: Option<u32>,
    },
    Graph {
        #[arg(long)]
        corpus: String,
        #[arg(long)]
        min_j: Option<f64>,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum RatingArg {
    High,
    Low,
}

#[derive(Subcommand)]
enum AssessCmd {
    Run {
        #[arg(long)]
        corpus: String,
        /// Assessment config JSON file; defaults otherwise.
        #[arg(long)]
        config: Option<PathBuf>,
    },
    Overlay {
        #[arg(long = "corpus", required = true)]
        corpora: Vec<String>,
    },
    Rate {
        #[arg(long)]
        corpus: String,
        #[arg(long)]
        doc: String,
        #[arg(long, value_enum)]
        rating: RatingArg,
        #[arg(long)]
        rater: String,
    },
    Ratings {
        #[arg(long)]
        corpus: Option<String>,
        #[arg(long)]
        rater: Option<String>,
    },
    /// Score a sample with an LLM judge; config as for `POST /llm-eval`.
    Llm {
        #[arg(long)]
        config: PathBuf,
    },
}

#[derive(Subcommand)]
enum JobsCmd {
    List {
        #[arg(long, default_value = "http://127.0.0.1:8080")]
        server: String,
    },
    Show {
        id: String,
        #[arg(long, default_value = "http://127.0.0.1:8080")]
        server: String,
    },
    Submit {
        #[arg(long)]
        kind: String,
        /// Job config JSON file.
        #[arg(long)]
        config: PathBuf,
        #[arg(long, default_value = "http://127.0.0.1:8080")]
        server: String,
    },
    Cancel {
        id: String,
        #[arg(long, default_value = "http://127.0.0.1:8080")]
        server: String,
    },
}

/// Progress lines on stderr.
struct Stderr;

impl Monitor for Stderr {
    fn progress(&self, fraction: f64, message: &str) {
        eprintln!("[{:5.1}%] {message}", fraction * 100.0);
    }
}

fn print<T: Serialize>(value: &T) -> Result<()> {
    let mut out = std::io::stdout().lock();
    serde_json::to_writer_pretty(&mut out, value)?;
    writeln!(out)?;
    Ok(())
}

fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T> {
    let bytes = std::fs::read(path).with_context(|| format!("reading {}", path.display()))?;
    oasis_cli::error::from_slice(&bytes).with_context(|| format!("parsing {}", path.display()))
}

fn run(app: &Arc<App>, spec: JobSpec) -> Result<()> {
    let spec = spec.resolve(app)?;
    spec.validate(app)?;
    let (output, result) = spec.execute(app, &Stderr)?;
    print(&json!({ "output": output, "result": result }))
}

fn http(server: &str, method: &str, path: &str, body: Option<Value>) -> Result<()> {
    let agent: ureq::Agent = ureq::Agent::config_builder().http_status_as_error(false).build().into();
    let url = format!("{}{path}", server.trim_end_matches('/'));
    let mut resp = match (method, body) {
        ("GET", _) => agent.get(&url).call()?,
        (_, Some(b)) => agent.post(&url).send_json(&b)?,
        (_, None) => agent.post(&url).send_empty()?,
    };
    let status = resp.status();
    let text = resp.body_mut().read_to_string()?;
    println!("{text}");
    if !status.is_success() {
        bail!("server answered {status}");
    }
    Ok(())
}

fn main() -> Result<()> {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    if let Command::Jobs(cmd) = cli.command {
        return match cmd {
            JobsCmd::List { server } => http(&server, "GET", "/jobs", None),
            JobsCmd::Show { id, server } => http(&server, "GET", &format!("/jobs/{id}"), None),
            JobsCmd::Submit { kind, config, server } => {
                let config: Value = read_json(&config)?;
                http(&server, "POST", "/jobs", Some(json!({ "kind": kind, "config": config })))
            }
            JobsCmd::Cancel { id, server } => http(&server, "POST", &format!("/jobs/{id}/cancel"), None),
        };
    }

    let app = App::open(&cli.data_root)?;
    match cli.command {
        Command::Serve { addr, workers, ui_dir } => {
            let jobs = JobManager::start(app, workers)?;
            let rt = tokio::runtime::Runtime::new()?;
            rt.block_on(api::serve(&addr, jobs.clone(), ui_dir))?;
            jobs.shutdown();
            Ok(())
        }
        Command::Corpus(cmd) => match cmd {
            CorpusCmd::Ingest { path, name, shard_size } => print(&app.store.ingest(&path, &name, shard_size)?),
            CorpusCmd::List => print(&app.store.list()),
            CorpusCmd::Show { name } => print(&json!({
                "corpus": app.store.get(&name)?,
                "lineage": app.store.lineage_chain(&name)?,
            })),
            CorpusCmd::Sample { corpus, n, seed } => {
                let handle = app.store.get(&corpus)?;
                print(&app.store.sample(&handle, n, seed)?)
            }
        },
        Command::Rule(cmd) => match cmd {
            RuleCmd::Run { p, out, jobs } => run(
                &app,
                JobSpec::RuleRun(RuleRunConfig {
                    corpus: p.corpus,
                    pipeline: Some(read_json(&p.pipeline)?),
                    pipeline_id: None,
                    out,
                    jobs,
                }),
            ),
            RuleCmd::SampleHits { p, cell_index, n, seed } => {
                let spec: PipelineSpec = read_json(&p.pipeline)?;
                let Some(cell) = spec.cells.get(cell_index) else {
                    bail!("pipeline has {} cells", spec.cells.len());
                };
                let hits = sample_hits(&CompiledCell::compile(cell)?, &app.store, &p.corpus, n, seed)?;
                let out: Vec<Value> = hits.into_iter().map(|(d, v)| json!({ "doc": d, "verdict": v })).collect();
                print(&out)
            }
            RuleCmd::Preview { p, n, seed, cases } => {
                let spec: PipelineSpec = read_json(&p.pipeline)?;
                let compiled = CompiledPipeline::compile(&spec)?;
                let docs = app.store.sample(&app.store.get(&p.corpus)?, n, seed)?;
                print(&preview(&compiled, &docs, cases, seed))
            }
            RuleCmd::Script { p, out, jobs, binary } => {
                let spec: PipelineSpec = read_json(&p.pipeline)?;
                let runtime = RuntimeConfig {
                    binary,
                    jobs,
                    out_name: out,
                    data_root: Some(app.store.root().display().to_string()),
                };
                print!("{}", emit_script(&spec, &p.corpus, &runtime));
                Ok(())
            }
        },
        Command::Lm(cmd) => match cmd {
            LmCmd::Train { corpus, out, order } => run(
                &app,
                JobSpec::LmTrain(LmTrainConfig {
                    corpus,
                    out,
                    lm: LmConfig::with_order(order),
                }),
            ),
            LmCmd::Score { corpus, model } => run(&app, JobSpec::LmScore(LmScoreConfig { corpus, model })),
            LmCmd::Quantile { model, corpus, q } => {
                let path = layout::abs(&app.store, &layout::lm_scores_rel(&model, &corpus));
                let scores = read_scores(&path).with_context(|| format!("no scores for {corpus} under {model}; run `lm score` first"))?;
                let values: Vec<f64> = scores.iter().map(|s| s.ppl).collect();
                let threshold = quantile_boundary(&values, q)?;
                let above = values.iter().filter(|&&v| v > threshold).count();
                print(&json!({ "model": model, "corpus": corpus, "q": q, "threshold": threshold, "scored": values.len(), "above": above }))
            }
        },
        Command::Quality(cmd) => match cmd {
            QualityCmd::Build { recipe } => run(
                &app,
                JobSpec::QualityBuild(QualityBuildConfig {
                    recipe: Some(read_json(&recipe)?),
                    recipe_id: None,
                }),
            ),
            QualityCmd::Train { dataset, out, config } => {
                let hyperparams: Hyperparams = match config {
                    Some(p) => read_json(&p)?,
                    None => Hyperparams::default(),
                };
                run(&app, JobSpec::QualityTrain(QualityTrainConfig { dataset, out, hyperparams }))
            }
            QualityCmd::Run {
                corpus,
                model,
                threshold,
                out,
            } => run(
                &app,
                JobSpec::QualityRun(QualityRunConfig {
                    corpus,
                    model,
                    threshold,
                    out,
                }),
            ),
        },
        Command::Dedup(cmd) => match cmd {
            DedupCmd::Plan { d } => {
                let handle = app.store.get(&d.corpus)?;
                print(&dedup::plan(&d.config("-").plan_request(handle.doc_count.max(1)))?)
            }
            DedupCmd::Run { d, out, passes } => {
                let mut c = d.config(&out);
                c.passes = passes;
                run(&app, JobSpec::DedupRun(c))
            }
            DedupCmd::Graph { corpus, min_j } => {
                app.store.get(&corpus)?;
                let g = dedup::load_graph(&app.store, &corpus)?;
                print(&min_j.map_or(g.clone(), |j| g.filtered(j)))
            }
        },
        Command::Assess(cmd) => match cmd {
            AssessCmd::Run { corpus, config } => {
                let config: AssessConfig = match config {
                    Some(p) => read_json(&p)?,
                    None => AssessConfig::default(),
                };
                run(&app, JobSpec::AssessRun(AssessRunConfig { corpus, config }))
            }
            AssessCmd::Overlay { corpora } => {
                let dir = reports_dir(&app.store);
                let reports = corpora
                    .iter()
                    .map(|c| {
                        load_report(&dir.join(format!("{c}.json"))).with_context(|| format!("no report for {c}; run `assess run` first"))
                    })
                    .collect::<Result<Vec<_>>>()?;
                print(&overlay(&reports)?)
            }
            AssessCmd::Rate {
                corpus,
                doc,
                rating,
                rater,
            } => {
                let rating = match rating {
                    RatingArg::High => Rating::High,
                    RatingArg::Low => Rating::Low,
                };
                print(&app.ratings.record(
                    &app.store,
                    RatingRecord {
                        doc_id: doc,
                        corpus,
                        rating,
                        rater,
                        timestamp: String::new(),
                    },
                )?)
            }
            AssessCmd::Ratings { corpus, rater } => print(&app.ratings.summary(corpus.as_deref(), rater.as_deref())),
            AssessCmd::Llm { config } => {
                let config: LlmEvalConfig = read_json(&config)?;
                run(&app, JobSpec::LlmEval(config))
            }
        },
        Command::Jobs(_) => unreachable!("handled above"),
    }
}
