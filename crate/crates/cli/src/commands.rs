use std::collections::BTreeMap;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use clap::{Args, Subcommand};
use mmfc_core::backends::{BackendMode, Backends, CountingTransport, EmbeddingTable};
use mmfc_core::curation::{dataset_stats, ot_select, topic_quota, DatasetStats, Embedded, SinkhornParams};
use mmfc_core::domain::{validate_post, IngestContext, Label, MisinfoType, Post, RawPost, ReasoningMethod, Topic};
use mmfc_core::evaluation::{
    emit_report, evaluate as run_evaluation, load_dataset, load_posts, ErrorPolicy, ReportFormat,
};
use mmfc_core::postprocess::domain_filter;
use mmfc_core::retrieval::{RetrievalPlan, Retriever};
use mmfc_loop::http::{serve as serve_http, AppState};
use mmfc_loop::{Detector, LoopService};
use rayon::prelude::*;
use serde::Serialize;
use serde_json::json;

use crate::config::{GlobalArgs, RunArgs, RunConfig, Settings};
use crate::{CliError, Outcome};

/// Loads the config file and sizes the global thread pool.
pub fn init_jobs(g: &GlobalArgs) -> Result<Settings, CliError> {
    let settings = Settings::load(g.config.as_deref())?;
    if let Some(n) = settings.jobs(g) {
        if n == 0 {
            return Err(CliError::Usage("--jobs must be at least 1".into()));
        }
        rayon::ThreadPoolBuilder::new().num_threads(n).build_global().map_err(|e| CliError::Fatal(e.to_string()))?;
    }
    Ok(settings)
}

fn fatal(e: impl std::fmt::Display) -> CliError {
    CliError::Fatal(e.to_string())
}

fn read_json_post(path: &Path) -> Result<Post, CliError> {
    let text = fs::read_to_string(path)?;
    let raw: RawPost = serde_json::from_str(&text).map_err(|e| fatal(format!("{}: {e}", path.display())))?;
    let ctx = IngestContext { today: None, base_dir: path.parent().map(Path::to_path_buf) };
    validate_post(raw, &ctx).map_err(|e| fatal(format!("{}: {e}", path.display())))
}

fn read_file(path: &Path) -> Result<Vec<Post>, CliError> {
    if path.extension().is_some_and(|e| e == "json") {
        Ok(vec![read_json_post(path)?])
    } else {
        load_posts(path).map_err(fatal)
    }
}

/// Posts in input order, plus the directory relative image paths resolve from.
pub fn read_inputs(input: &Path) -> Result<(Vec<Post>, PathBuf), CliError> {
    if input.is_dir() {
        let mut files: Vec<PathBuf> = fs::read_dir(input)?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| p.extension().is_some_and(|e| e == "json" || e == "jsonl"))
            .collect();
        files.sort();
        let mut posts = Vec::new();
        for f in files {
            posts.extend(read_file(&f)?);
        }
        return Ok((posts, input.to_path_buf()));
    }
    let dir = input.parent().map(Path::to_path_buf).unwrap_or_default();
    Ok((read_file(input)?, dir))
}

fn open_out(out: Option<&Path>) -> Result<Box<dyn Write>, CliError> {
    Ok(match out {
        Some(p) => Box::new(std::io::BufWriter::new(fs::File::create(p)?)),
        None => Box::new(std::io::stdout().lock()),
    })
}

fn report_calls(mode: BackendMode, t: &CountingTransport) {
    log::info!("{mode} mode: {} network calls", t.calls());
}

#[derive(Serialize)]
struct DetectLine<'a> {
    post_id: &'a str,
    config: &'a str,
    #[serde(skip_serializing_if = "Option::is_none")]
    label: Option<Label>,
    #[serde(skip_serializing_if = "Option::is_none")]
    confidence: Option<u8>,
    #[serde(skip_serializing_if = "Option::is_none")]
    verdict: Option<&'a mmfc_core::domain::Verdict>,
    #[serde(skip_serializing_if = "Option::is_none")]
    evidence_items: Option<usize>,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    warnings: Vec<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    error: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    tag: Option<&'static str>,
}

pub fn detect(
    g: &GlobalArgs,
    s: &Settings,
    input: &Path,
    out: Option<&Path>,
    run: &RunArgs,
    force_mode: Option<BackendMode>,
) -> Result<Outcome, CliError> {
    let mut cfg = RunConfig::resolve(&GlobalArgs { backend_mode: force_mode.or(g.backend_mode), ..g.clone() }, run, s)?;
    if let Some(m) = force_mode {
        cfg.mode = m;
    }
    let (posts, dir) = read_inputs(input)?;
    let (pipeline, _, transport) = cfg.build(s, Some(&dir))?;
    let digest = cfg.pipeline.fingerprint().digest;
    let results: Vec<_> = posts.par_iter().map(|p| pipeline.detect(p)).collect();

    let mut w = open_out(out)?;
    let mut failed = 0;
    for (post, r) in posts.iter().zip(&results) {
        let line = match r {
            Ok(d) => DetectLine {
                post_id: &post.id,
                config: &digest,
                label: Some(d.verdict.label),
                confidence: Some(d.verdict.confidence),
                verdict: Some(&d.verdict),
                evidence_items: Some(d.bundle.item_count()),
                warnings: d.bundle.warnings.clone(),
                error: None,
                tag: None,
            },
            Err(e) => {
                failed += 1;
                DetectLine {
                    post_id: &post.id,
                    config: &digest,
                    label: None,
                    confidence: None,
                    verdict: None,
                    evidence_items: None,
                    warnings: vec![],
                    error: Some(e.to_string()),
                    tag: Some(e.tag()),
                }
            }
        };
        writeln!(w, "{}", serde_json::to_string(&line).map_err(fatal)?)?;
    }
    w.flush()?;
    report_calls(cfg.mode, &transport);
    if failed > 0 {
        eprintln!("{failed} of {} posts failed", posts.len());
        return Ok(Outcome::Partial);
    }
    Ok(Outcome::Ok)
}

pub fn record(
    g: &GlobalArgs,
    s: &Settings,
    input: &Path,
    out: Option<&Path>,
    run: &RunArgs,
) -> Result<Outcome, CliError> {
    if let Some(m) = g.backend_mode.filter(|m| *m != BackendMode::Record) {
        return Err(CliError::Usage(format!("record runs in record mode, not {m}")));
    }
    let sink = std::env::temp_dir().join(format!("mmfc-record-{}.jsonl", std::process::id()));
    let outcome = detect(g, s, input, Some(out.unwrap_or(&sink)), run, Some(BackendMode::Record))?;
    if out.is_none() {
        let _ = fs::remove_file(&sink);
    }
    Ok(outcome)
}

pub fn retrieve(
    g: &GlobalArgs,
    s: &Settings,
    input: &Path,
    out: Option<&Path>,
    run: &RunArgs,
) -> Result<Outcome, CliError> {
    let cfg = RunConfig::resolve(g, run, s)?;
    if cfg.pipeline.strategies.is_empty() {
        return Err(CliError::Usage("retrieve needs at least one strategy".into()));
    }
    let (posts, dir) = read_inputs(input)?;
    let (backends, transport) = s.connect(cfg.mode, cfg.cache_dir.as_deref())?;
    let plan = RetrievalPlan::new(cfg.pipeline.strategies.iter().copied(), cfg.pipeline.k, cfg.pipeline.n_queries)
        .map_err(|e| CliError::Usage(e.to_string()))?;
    let retriever =
        Retriever::new(backends.search.clone(), backends.llm.clone(), cfg.pipeline.reasoning.model_id.clone());
    let results: Vec<_> = posts
        .par_iter()
        .map(|p| {
            backends.images.register_post(p, Some(&dir));
            retriever.retrieve(p, &plan).map(|b| {
                if cfg.pipeline.domain_filter {
                    domain_filter(&b, &cfg.policy)
                } else {
                    b
                }
            })
        })
        .collect();
    let mut w = open_out(out)?;
    let mut failed = 0;
    for (post, r) in posts.iter().zip(results) {
        let line = match r {
            Ok(b) => serde_json::to_value(&b).map_err(fatal)?,
            Err(e) => {
                failed += 1;
                json!({ "post_id": post.id, "error": e.to_string() })
            }
        };
        writeln!(w, "{line}")?;
    }
    w.flush()?;
    report_calls(cfg.mode, &transport);
    Ok(if failed > 0 { Outcome::Partial } else { Outcome::Ok })
}

#[derive(Debug, Args)]
pub struct EvaluateArgs {
    /// Labelled JSONL dataset.
    #[arg(long)]
    pub dataset: PathBuf,
    /// Split file listing dev ids (one per line, or {"dev": [...]}).
    #[arg(long)]
    pub split: Option<PathBuf>,
    /// dev, test or all.
    #[arg(long, default_value = "all", value_parser = ["dev", "test", "all"])]
    pub subset: String,
    /// table or jsonl.
    #[arg(long, default_value = "table")]
    pub format: ReportFormat,
    /// How failed posts count: count-as-wrong or exclude.
    #[arg(long, default_value = "count-as-wrong")]
    pub error_policy: ErrorPolicy,
    /// Exit 2 when the share of failed posts exceeds this.
    #[arg(long, default_value_t = 0.0)]
    pub max_error_rate: f64,
    /// Evaluate each listed reasoning method, e.g. cot,multistep.
    #[arg(long, value_delimiter = ',')]
    pub grid: Vec<String>,
    /// Report file (single run).
    #[arg(long, conflicts_with = "out_dir")]
    pub out: Option<PathBuf>,
    /// Directory for one report per grid entry.
    #[arg(long)]
    pub out_dir: Option<PathBuf>,
    #[command(flatten)]
    pub run: RunArgs,
}

pub fn evaluate(g: &GlobalArgs, s: &Settings, a: &EvaluateArgs) -> Result<Outcome, CliError> {
    let base = RunConfig::resolve(g, &a.run, s)?;
    if a.subset != "all" && a.split.is_none() {
        return Err(CliError::Usage(format!("--subset {} needs --split", a.subset)));
    }
    if a.grid.len() > 1 && a.out.is_some() {
        return Err(CliError::Usage("a grid writes several reports; use --out-dir".into()));
    }
    let methods: Vec<ReasoningMethod> = if a.grid.is_empty() {
        vec![base.pipeline.reasoning.method]
    } else {
        a.grid
            .iter()
            .map(|m| m.parse().map_err(|e: mmfc_core::domain::ValidationError| CliError::Usage(e.to_string())))
            .collect::<Result<_, _>>()?
    };
    let ds = load_dataset(&a.dataset, a.split.as_deref()).map_err(fatal)?;
    let posts = match a.subset.as_str() {
        "dev" => ds.dev,
        "test" => ds.test,
        _ => ds.dev.into_iter().chain(ds.test).collect(),
    };
    let dir = a.dataset.parent().map(Path::to_path_buf).unwrap_or_default();
    let (backends, transport) = s.connect(base.mode, base.cache_dir.as_deref())?;
    let ext = match a.format {
        ReportFormat::Table => "txt",
        ReportFormat::Jsonl => "jsonl",
    };
    if let Some(d) = &a.out_dir {
        fs::create_dir_all(d)?;
    }

    let mut outcome = Outcome::Ok;
    for (i, method) in methods.iter().enumerate() {
        let mut cfg = base.clone();
        cfg.pipeline.reasoning.method = *method;
        cfg.pipeline.validate().map_err(|e| CliError::Usage(e.to_string()))?;
        let pipeline = pipeline_for(&backends, &cfg, &dir)?;
        let (records, report) = run_evaluation(&posts, &pipeline, a.error_policy).map_err(fatal)?;
        let mut w: Box<dyn Write> = match (&a.out_dir, &a.out) {
            (Some(d), _) => Box::new(fs::File::create(d.join(format!("report-{method}.{ext}")))?),
            (None, Some(p)) => Box::new(fs::File::create(p)?),
            (None, None) => {
                if i > 0 {
                    println!();
                }
                Box::new(std::io::stdout().lock())
            }
        };
        emit_report(&report, &records, a.format, &mut w)?;
        w.flush()?;
        if report.n_errors > 0 && report.error_rate() > a.max_error_rate {
            eprintln!("{method}: {} of {} posts failed", report.n_errors, records.len());
            outcome = Outcome::Partial;
        }
    }
    report_calls(base.mode, &transport);
    Ok(outcome)
}

fn pipeline_for(b: &Backends, cfg: &RunConfig, dir: &Path) -> Result<mmfc_core::pipeline::Pipeline, CliError> {
    Ok(mmfc_core::pipeline::Pipeline::new(b, cfg.pipeline.clone(), cfg.policy.clone())
        .map_err(|e| CliError::Usage(e.to_string()))?
        .with_image_dir(Some(dir)))
}

#[derive(Debug, Subcommand)]
pub enum CurateCommand {
    /// Pick one real candidate per fake post within each topic.
    Select(SelectArgs),
    /// Label, topic, month and type histograms of a dataset.
    Stats(StatsArgs),
}

#[derive(Debug, Args)]
pub struct SelectArgs {
    /// JSONL of fake posts, each with a topic.
    #[arg(long)]
    pub fakes: PathBuf,
    /// JSONL of candidate real posts.
    #[arg(long)]
    pub candidates: PathBuf,
    /// Embedding sidecar; posts missing from it are embedded by the configured embedder.
    #[arg(long)]
    pub embeddings: Option<PathBuf>,
    /// Selection report (JSON).
    #[arg(long)]
    pub out: PathBuf,
    /// Also write the selected candidate posts as a dataset file.
    #[arg(long)]
    pub selected_posts: Option<PathBuf>,
    /// Entropic regularization.
    #[arg(long, default_value_t = mmfc_core::curation::DEFAULT_EPS)]
    pub eps: f64,
    #[arg(long, default_value_t = mmfc_core::curation::DEFAULT_MAX_ITER)]
    pub max_iter: usize,
    #[arg(long, default_value_t = mmfc_core::curation::DEFAULT_TOL)]
    pub tol: f64,
}

#[derive(Debug, Args)]
pub struct StatsArgs {
    /// JSONL dataset.
    #[arg(long)]
    pub dataset: PathBuf,
    /// table or json.
    #[arg(long, default_value = "table", value_parser = ["table", "json"])]
    pub format: String,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

pub fn curate(g: &GlobalArgs, s: &Settings, c: &CurateCommand) -> Result<Outcome, CliError> {
    match c {
        CurateCommand::Select(a) => select(g, s, a),
        CurateCommand::Stats(a) => stats(a),
    }
}

fn embed_all(
    posts: &[Post],
    dir: &Path,
    table: Option<&EmbeddingTable>,
    backends: &Backends,
) -> Result<BTreeMap<Topic, Vec<Embedded>>, CliError> {
    let mut by_topic: BTreeMap<Topic, Vec<Embedded>> = BTreeMap::new();
    for p in posts {
        let Some(topic) = p.topic else {
            log::warn!("post {} has no topic; skipped", p.id);
            continue;
        };
        let vector = match table.and_then(|t| t.get(&p.id)) {
            Some(v) => v.to_vec(),
            None => {
                backends.images.register_post(p, Some(dir));
                backends.embedder.embed(&p.images[0]).map_err(|e| fatal(format!("embedding {}: {e}", p.id)))?
            }
        };
        by_topic.entry(topic).or_default().push(Embedded { id: p.id.clone(), vector });
    }
    Ok(by_topic)
}

fn select(g: &GlobalArgs, s: &Settings, a: &SelectArgs) -> Result<Outcome, CliError> {
    let fakes = load_posts(&a.fakes).map_err(fatal)?;
    let candidates = load_posts(&a.candidates).map_err(fatal)?;
    let quota = topic_quota(&fakes).map_err(fatal)?;
    let table = a.embeddings.as_deref().map(EmbeddingTable::read).transpose().map_err(fatal)?;
    let mode = s.mode(g)?;
    let (backends, transport) = s.connect(mode, s.cache_dir(g).as_deref())?;
    if let Some(t) = &table {
        if t.dim != backends.embedder.dim() && (fakes.iter().chain(&candidates)).any(|p| t.get(&p.id).is_none()) {
            return Err(CliError::Usage(format!(
                "sidecar dimension {} differs from the embedder's {} and some posts need embedding",
                t.dim,
                backends.embedder.dim()
            )));
        }
    }
    let dir_of = |p: &Path| p.parent().map(Path::to_path_buf).unwrap_or_default();
    let f = embed_all(&fakes, &dir_of(&a.fakes), table.as_ref(), &backends)?;
    let c = embed_all(&candidates, &dir_of(&a.candidates), table.as_ref(), &backends)?;
    let params = SinkhornParams { eps: a.eps, max_iter: a.max_iter, tol: a.tol };
    let result = ot_select(&f, &c, &quota, params).map_err(fatal)?;
    for (topic, sel) in &result.topics {
        if !sel.converged {
            log::warn!("topic {topic}: Sinkhorn did not converge in {} iterations", sel.iterations);
        }
    }
    let report = json!({
        "params": { "eps": a.eps, "max_iter": a.max_iter, "tol": a.tol, "embedding_dim": backends.embedder.dim() },
        "quota": quota,
        "counts": result.counts(),
        "total_cost": result.total_cost,
        "topics": result.topics,
        "selected": result.chosen(),
    });
    fs::write(&a.out, serde_json::to_string_pretty(&report).map_err(fatal)? + "\n")?;
    if let Some(path) = &a.selected_posts {
        let chosen: std::collections::HashSet<&str> = result.chosen().into_iter().collect();
        let mut w = std::io::BufWriter::new(fs::File::create(path)?);
        for p in candidates.iter().filter(|p| chosen.contains(p.id.as_str())) {
            writeln!(w, "{}", p.to_json_line())?;
        }
        w.flush()?;
    }
    report_calls(mode, &transport);
    Ok(Outcome::Ok)
}

fn bar(n: usize, max: usize) -> String {
    if max == 0 {
        return String::new();
    }
    "#".repeat((n * 40).div_ceil(max))
}

pub fn render_stats(st: &DatasetStats) -> String {
    let mut out = format!("posts: {} (real {}, fake {}, unlabeled {})\n\n", st.total, st.real, st.fake, st.unlabeled);
    let max = st.by_topic.values().copied().max().unwrap_or(0).max(st.no_topic);
    out += &format!("{:<14}{:>6}\n", "topic", "posts");
    for t in Topic::ALL {
        let n = st.by_topic.get(&t).copied().unwrap_or(0);
        out += &format!("{:<14}{:>6}  {}\n", t.as_str(), n, bar(n, max));
    }
    if st.no_topic > 0 {
        out += &format!("{:<14}{:>6}  {}\n", "(none)", st.no_topic, bar(st.no_topic, max));
    }
    let max = st.by_month.values().copied().max().unwrap_or(0);
    out += &format!("\n{:<14}{:>6}\n", "month", "posts");
    for (m, n) in &st.by_month {
        out += &format!("{:<14}{:>6}  {}\n", m, n, bar(*n, max));
    }
    out += &format!("\n{:<18}{:>6}\n", "type (fake posts)", "posts");
    for t in MisinfoType::ALL {
        out += &format!("{:<18}{:>6}\n", t.display_name(), st.by_type.get(&t).copied().unwrap_or(0));
    }
    out
}

fn stats(a: &StatsArgs) -> Result<Outcome, CliError> {
    let posts = load_posts(&a.dataset).map_err(fatal)?;
    let st = dataset_stats(&posts);
    let text = match a.format.as_str() {
        "json" => serde_json::to_string_pretty(&st).map_err(fatal)? + "\n",
        _ => render_stats(&st),
    };
    let mut w = open_out(a.out.as_deref())?;
    w.write_all(text.as_bytes())?;
    w.flush()?;
    Ok(Outcome::Ok)
}

#[derive(Debug, Args)]
pub struct ServeArgs {
    /// Journal directory (created if missing).
    #[arg(long, env = "MMFC_JOURNAL")]
    pub journal: Option<PathBuf>,
    /// Listen address.
    #[arg(long, env = "MMFC_BIND")]
    pub bind: Option<String>,
    /// Accepted bearer token; repeat for several.
    #[arg(long = "token", env = "MMFC_TOKENS", value_delimiter = ',')]
    pub tokens: Vec<String>,
    /// Serve without authentication.
    #[arg(long)]
    pub no_auth: bool,
    #[command(flatten)]
    pub run: RunArgs,
}

pub const DEFAULT_BIND: &str = "127.0.0.1:8080";

pub fn serve(g: &GlobalArgs, s: &Settings, a: &ServeArgs) -> Result<Outcome, CliError> {
    let file = &s.file.serve;
    let journal = a.journal.clone().or_else(|| file.journal.as_deref().map(|p| s.path(p))).ok_or_else(|| {
        CliError::Usage("serve needs a journal directory (--journal, MMFC_JOURNAL or [serve].journal)".into())
    })?;
    let tokens = if a.tokens.is_empty() { file.tokens.clone().unwrap_or_default() } else { a.tokens.clone() };
    if tokens.is_empty() && !a.no_auth {
        return Err(CliError::Usage("no bearer tokens configured; pass --token or --no-auth".into()));
    }
    let bind = a.bind.clone().or_else(|| file.bind.clone()).unwrap_or_else(|| DEFAULT_BIND.into());

    let detector: Option<Arc<dyn Detector>> = if RunConfig::model(&a.run, s).is_some() {
        let cfg = RunConfig::resolve(g, &a.run, s)?;
        let (pipeline, _, _) = cfg.build(s, None)?;
        Some(Arc::new(pipeline))
    } else {
        log::warn!("no model configured; POST /runs is disabled");
        None
    };
    let service = Arc::new(LoopService::open(&journal).map_err(fatal)?);
    let app = AppState { service, detector, tokens: Arc::new(tokens) };

    let rt = tokio::runtime::Builder::new_multi_thread().enable_all().build()?;
    rt.block_on(async move {
        let listener = tokio::net::TcpListener::bind(&bind).await.map_err(|e| fatal(format!("{bind}: {e}")))?;
        let addr = listener.local_addr()?;
        eprintln!("listening on http://{addr}");
        serve_http(listener, app, shutdown_signal()).await.map_err(fatal)
    })?;
    eprintln!("journal flushed; bye");
    Ok(Outcome::Ok)
}

async fn shutdown_signal() {
    let ctrl_c = async {
        let _ = tokio::signal::ctrl_c().await;
    };
    #[cfg(unix)]
    let term = async {
        match tokio::signal::unix::signal(tokio::signal::unix::SignalKind::terminate()) {
            Ok(mut s) => {
                s.recv().await;
            }
            Err(_) => std::future::pending::<()>().await,
        }
    };
    #[cfg(not(unix))]
    let term = std::future::pending::<()>();
    tokio::select! {
        _ = ctrl_c => {},
        _ = term => {},
    }
}
