use std::fs::{self, File, OpenOptions};
use std::io::{BufReader, Write};
use std::path::{Path, PathBuf};
use std::sync::Arc;

use anyhow::{anyhow, bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use rca_core::agent::{run_episode, AgentConfig, Hooks, RootCausePrediction, Trajectory};
use rca_core::baselines::{run_baseline, BaselineConfig, BaselineMode};
use rca_core::config::AppConfig;
use rca_core::corpus::{ingest_incidents, summarize_all, Corpus, CorpusSplit, CorpusStore};
use rca_core::digest::config_hash;
use rca_core::eval::{load_predictions, load_references, EvaluationReport, LabelSet};
use rca_core::llm::{Gateway, ModelRole, Script};
use rca_core::retrieval::{build_index, load_index, save_index, IndexKind, Retriever};
use rca_core::service::{CorpusSource, EpisodeSource, Response, ScenarioSource, SessionManager, SessionRequest};
use rca_core::simenv::{judge_outcome, load_scenario, run_script, shipped, shipped_scenario, Scenario};
use rca_core::tools::{react_toolset, NoHuman, ReactMode};
use serde::Deserialize;

use crate::client::Client;

#[derive(Debug, Parser)]
#[command(name = "rca", version, about = "Incident root-cause analysis: agents, baselines, metrics, scenarios")]
pub struct Cli {
    /// TOML settings file; defaults apply when omitted.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Replay scripted model responses from this TOML file instead of calling
    /// the configured endpoint (keys: planner, utility).
    #[arg(long, global = true)]
    pub script: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Read line-delimited incident records into a corpus directory.
    Ingest(IngestArgs),
    /// Summarize every incident of a corpus with the utility model.
    Summarize(SummarizeArgs),
    /// Build and save a retrieval index for a corpus.
    Index(IndexArgs),
    /// Predict root causes with an agent or a baseline.
    Run(RunArgs),
    /// Score predictions against references.
    Eval(EvalArgs),
    /// Simulated diagnostic scenarios.
    #[command(subcommand)]
    Scenario(ScenarioCmd),
    /// Serve sessions over HTTP.
    Serve(ServeArgs),
    /// Create or inspect sessions on a running service.
    #[command(subcommand)]
    Session(SessionCmd),
    /// Act on a session: approve, deny, answer, interject or abort.
    Respond(RespondArgs),
    /// Print a session's events.
    Events(EventsArgs),
    /// Print the effective configuration.
    Config,
}

#[derive(Debug, Args)]
pub struct IngestArgs {
    /// JSON lines file of incident records.
    pub input: PathBuf,
    #[arg(long)]
    pub corpus: PathBuf,
    #[arg(long, default_value_t = 0)]
    pub eval_size: usize,
    #[arg(long, default_value_t = 0)]
    pub test_size: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

#[derive(Debug, Args)]
pub struct SummarizeArgs {
    #[arg(long)]
    pub corpus: PathBuf,
    /// Also summarize the discussion threads.
    #[arg(long)]
    pub discussions: bool,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum Kind {
    Sparse,
    Dense,
}

impl From<Kind> for IndexKind {
    fn from(k: Kind) -> Self {
        match k {
            Kind::Sparse => IndexKind::Sparse,
            Kind::Dense => IndexKind::Dense,
        }
    }
}

#[derive(Debug, Args)]
pub struct IndexArgs {
    #[arg(long)]
    pub corpus: PathBuf,
    #[arg(long, value_enum, default_value = "sparse")]
    pub kind: Kind,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum RunMode {
    ReactBr,
    ReactSq,
    Rb,
    Cot,
    Ircot,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum SplitName {
    Train,
    Eval,
    Test,
}

#[derive(Debug, Args)]
pub struct RunArgs {
    #[arg(long, value_enum)]
    pub mode: RunMode,
    #[arg(long)]
    pub corpus: PathBuf,
    /// Incidents to run; repeatable. Defaults to the whole --split.
    #[arg(long)]
    pub incident: Vec<String>,
    #[arg(long, value_enum, default_value = "test")]
    pub split: SplitName,
    /// Documents per retrieval (agents) or examples (baselines).
    #[arg(long)]
    pub k: Option<usize>,
    #[arg(long, value_enum, default_value = "sparse")]
    pub retriever: Kind,
    /// Output directory for trajectories and predictions.jsonl.
    #[arg(long, default_value = "runs")]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    /// Predictions, one JSON object per line.
    #[arg(long)]
    pub pred: PathBuf,
    /// References: JSON lines with incident_id (or id) and root_cause.
    #[arg(long = "ref")]
    pub reference: PathBuf,
    /// Annotations, one JSON object per line.
    #[arg(long)]
    pub labels: Option<PathBuf>,
    /// Write the machine-readable report here.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Subcommand)]
pub enum ScenarioCmd {
    /// List built-in scenarios and their scripts.
    List,
    /// Run a script end to end and judge the outcome.
    Run {
        /// Scenario file or built-in id.
        which: String,
        /// Script name from the scenario file.
        #[arg(value_name = "SCRIPT")]
        name: String,
        /// Write the trajectory here.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Judge a saved trajectory against a scenario's outcomes.
    Judge { which: String, trajectory: PathBuf },
    /// Check a scenario file.
    Validate { which: String },
}

#[derive(Debug, Args)]
pub struct ServeArgs {
    #[arg(long)]
    pub port: Option<u16>,
    #[arg(long)]
    pub bind: Option<String>,
    /// Serve sessions over this scenario (file or built-in id).
    #[arg(long, conflicts_with = "corpus")]
    pub scenario: Option<String>,
    /// Serve sessions over incidents of this corpus.
    #[arg(long)]
    pub corpus: Option<PathBuf>,
    #[arg(long)]
    pub data_dir: Option<PathBuf>,
    /// Require operator approval before every tool call.
    #[arg(long)]
    pub approval: bool,
}

#[derive(Debug, Subcommand)]
pub enum SessionCmd {
    Create {
        #[arg(long, default_value = "http://127.0.0.1:8080")]
        url: String,
        #[arg(long)]
        incident: String,
        #[arg(long)]
        mode: String,
    },
    Get {
        #[arg(long, default_value = "http://127.0.0.1:8080")]
        url: String,
        id: String,
    },
    List {
        #[arg(long, default_value = "http://127.0.0.1:8080")]
        url: String,
    },
}

#[derive(Debug, Args)]
pub struct RespondArgs {
    #[arg(long, default_value = "http://127.0.0.1:8080")]
    pub url: String,
    pub session: String,
    #[command(subcommand)]
    pub action: Action,
}

#[derive(Debug, Subcommand)]
pub enum Action {
    Approve,
    Deny { reason: String },
    HumanAnswer { text: String },
    Interject { text: String },
    Abort,
}

impl From<Action> for Response {
    fn from(a: Action) -> Self {
        match a {
            Action::Approve => Response::Approve,
            Action::Deny { reason } => Response::Deny { reason },
            Action::HumanAnswer { text } => Response::HumanAnswer { text },
            Action::Interject { text } => Response::Interject { text },
            Action::Abort => Response::Abort,
        }
    }
}

#[derive(Debug, Args)]
pub struct EventsArgs {
    #[arg(long, default_value = "http://127.0.0.1:8080")]
    pub url: String,
    pub session: String,
    #[arg(long, default_value_t = 0)]
    pub after: u64,
    /// Keep streaming until the session ends.
    #[arg(long)]
    pub follow: bool,
}

#[derive(Debug, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct ScriptFile {
    planner: Script,
    utility: Script,
}

struct Ctx {
    config: AppConfig,
    gateway: Gateway,
}

impl Ctx {
    fn new(cli: &Cli) -> Result<Self> {
        let config = AppConfig::load_or_default(cli.config.as_deref())?;
        let gateway = match &cli.script {
            Some(path) => {
                let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
                let s: ScriptFile = toml::from_str(&text).with_context(|| format!("parsing {}", path.display()))?;
                Gateway::scripted(s.planner, s.utility)
            }
            None => config.gateway(),
        };
        Ok(Self { config, gateway })
    }
}

pub fn run(cli: Cli) -> Result<()> {
    let ctx = Ctx::new(&cli)?;
    match cli.command {
        Command::Ingest(a) => ingest(&ctx, a),
        Command::Summarize(a) => summarize(&ctx, a),
        Command::Index(a) => index(&ctx, a),
        Command::Run(a) => run_predictions(&ctx, a),
        Command::Eval(a) => eval(&ctx, a),
        Command::Scenario(c) => scenario(&ctx, c),
        Command::Serve(a) => serve(&ctx, a),
        Command::Session(c) => session(c),
        Command::Respond(a) => {
            let ack = Client::new(&a.url).respond(&a.session, &a.action.into())?;
            println!("{}", serde_json::to_string(&ack)?);
            Ok(())
        }
        Command::Events(a) => Client::new(&a.url).events(&a.session, a.after, a.follow, |e| {
            println!("{}", serde_json::to_string(&e).expect("event serializes"));
        }),
        Command::Config => {
            print!("{}", ctx.config.to_toml());
            Ok(())
        }
    }
}

fn ingest(ctx: &Ctx, a: IngestArgs) -> Result<()> {
    let file = File::open(&a.input).with_context(|| format!("opening {}", a.input.display()))?;
    let (mut corpus, report) = ingest_incidents(BufReader::new(file), None)?;
    if a.eval_size + a.test_size > 0 {
        let ids: Vec<String> = corpus.ids().map(String::from).collect();
        corpus.set_split(CorpusSplit::random(&ids, a.eval_size, a.test_size, a.seed)?)?;
    }
    let manifest = CorpusStore::open(&a.corpus).save(&corpus, Some(config_hash(&ctx.config.summarize)))?;
    for r in &report.rejected {
        eprintln!("line {}: rejected{}: {}", r.line, r.id.as_ref().map(|i| format!(" {i}")).unwrap_or_default(), r.reason);
    }
    println!(
        "ingested {} incidents ({} rejected); split train/eval/test = {}/{}/{}",
        report.accepted,
        report.rejected.len(),
        manifest.split.train,
        manifest.split.eval,
        manifest.split.test
    );
    Ok(())
}

fn summarize(ctx: &Ctx, a: SummarizeArgs) -> Result<()> {
    let store = CorpusStore::open(&a.corpus);
    let mut corpus = store.load()?;
    let mut session = ctx.gateway.session(ModelRole::Utility);
    let records = corpus.records().to_vec();
    let mut failed = 0;
    for r in &records {
        let summary = match summarize_all(r, &mut session, &ctx.config.summarize, a.discussions) {
            Ok(s) => s,
            Err(e) => {
                failed += 1;
                eprintln!("{e}");
                *e.partial
            }
        };
        corpus.insert_summary(summary)?;
    }
    store.save(&corpus, Some(config_hash(&ctx.config.summarize)))?;
    println!("summarized {} incidents ({failed} incomplete)", records.len());
    Ok(())
}

fn index(ctx: &Ctx, a: IndexArgs) -> Result<()> {
    let store = CorpusStore::open(&a.corpus);
    let corpus = store.load()?;
    let cfg = &ctx.config.agent.retrieval;
    let embedder = cfg.embedder.build();
    let idx = build_index(&corpus, cfg, a.kind.into(), Some(embedder.as_ref()))?;
    let manifest = save_index(&a.corpus, &idx, cfg, &store.content_hash()?)?;
    println!("indexed {} documents ({})", manifest.documents, manifest.kind);
    Ok(())
}

/// Saved index when it matches the corpus and settings, else a fresh one.
fn retriever(dir: &Path, store: &CorpusStore, corpus: &Corpus, config: &AgentConfig, kind: IndexKind) -> Result<Retriever> {
    let cfg = &config.retrieval;
    if let Ok((manifest, idx)) = load_index(dir, kind) {
        if manifest.corpus_hash == store.content_hash()? && &manifest.config == cfg {
            return Ok(Retriever::from_index(idx, cfg)?);
        }
        tracing::warn!("saved {kind} index is stale; rebuilding in memory");
    }
    Ok(Retriever::build(corpus, cfg, kind)?)
}

fn run_predictions(ctx: &Ctx, a: RunArgs) -> Result<()> {
    let store = CorpusStore::open(&a.corpus);
    let corpus = Arc::new(store.load()?);
    let mut agent = ctx.config.agent.clone();
    if let Some(k) = a.k {
        agent.retrieval.k = k;
    }
    agent.validate().map_err(|e| anyhow!(e))?;
    let kind: IndexKind = a.retriever.into();
    let retriever = retriever(&a.corpus, &store, &corpus, &agent, kind)?;

    let targets: Vec<String> = if a.incident.is_empty() {
        let split = corpus.split();
        let set = match a.split {
            SplitName::Train => &split.train,
            SplitName::Eval => &split.eval,
            SplitName::Test => &split.test,
        };
        set.iter().cloned().collect()
    } else {
        a.incident.clone()
    };
    if targets.is_empty() {
        bail!("no incidents to run; pass --incident or pick a non-empty --split");
    }
    fs::create_dir_all(&a.out)?;
    let pred_path = a.out.join("predictions.jsonl");
    let mut preds = OpenOptions::new().create(true).append(true).open(&pred_path)?;

    for id in &targets {
        let incident = corpus.get(id).ok_or_else(|| anyhow!("unknown incident {id}"))?;
        let summary = corpus.summary_or_raw(id)?;
        let prediction: Option<RootCausePrediction> = match a.mode {
            RunMode::ReactBr | RunMode::ReactSq => {
                let mode = if a.mode == RunMode::ReactBr { ReactMode::ReactBr } else { ReactMode::ReactSq };
                let tools = react_toolset(mode, retriever.clone(), corpus.clone(), agent.retrieval.k, ctx.config.with_discussions);
                let mut planner = ctx.gateway.session(ModelRole::Planner);
                let mut utility = ctx.gateway.session(ModelRole::Utility);
                let t = run_episode(
                    incident,
                    &summary,
                    &tools,
                    &agent,
                    &mut planner,
                    &mut utility,
                    Hooks::new(&NoHuman),
                    mode.as_str(),
                );
                t.write(&a.out.join(format!("{id}.{mode}.json")))?;
                println!("{id}: {:?} after {} steps", t.terminal, t.steps.len());
                t.prediction
            }
            RunMode::Rb | RunMode::Cot | RunMode::Ircot => {
                let mode = match a.mode {
                    RunMode::Rb => BaselineMode::Rb,
                    RunMode::Cot => BaselineMode::Cot,
                    _ => BaselineMode::Ircot,
                };
                let mut cfg = BaselineConfig { mode, retriever_kind: kind, ..ctx.config.baseline.clone() };
                if let Some(k) = a.k {
                    cfg.k = k;
                }
                let mut session = ctx.gateway.session(ModelRole::Planner);
                let run = run_baseline(&summary, &cfg, &retriever, &corpus, &mut session)?;
                println!("{id}: {} examples", run.retrieved_ids.len());
                Some(run.prediction)
            }
        };
        if let Some(p) = prediction {
            writeln!(preds, "{}", serde_json::to_string(&p)?)?;
        }
    }
    println!("predictions appended to {}", pred_path.display());
    Ok(())
}

fn eval(ctx: &Ctx, a: EvalArgs) -> Result<()> {
    let read = |p: &Path| fs::read_to_string(p).with_context(|| format!("reading {}", p.display()));
    let preds = load_predictions(&read(&a.pred)?)?;
    let refs = load_references(&read(&a.reference)?)?;
    let labels = a.labels.as_deref().map(|p| read(p).and_then(|t| Ok(LabelSet::from_jsonl(&t)?))).transpose()?;
    let embedder = ctx.config.agent.retrieval.embedder.build();
    let report = EvaluationReport::build(&preds, &refs, labels.as_ref(), &ctx.config.metrics, embedder.as_ref())?;
    print!("{}", report.render());
    if let Some(labels) = &labels {
        for d in labels.disagreements() {
            eprintln!("annotators disagree on {} ({})", d.incident_id, d.model);
        }
    }
    if let Some(out) = &a.out {
        fs::write(out, report.to_json())?;
    }
    Ok(())
}

fn resolve_scenario(which: &str) -> Result<Scenario> {
    let path = Path::new(which);
    if path.exists() {
        return Ok(load_scenario(path)?);
    }
    shipped_scenario(which).ok_or_else(|| {
        let names: Vec<&str> = shipped().iter().map(|(f, _)| f.trim_end_matches(".toml")).collect();
        anyhow!("no scenario file or built-in scenario named '{which}' (built-in: {})", names.join(", "))
    })
}

fn scenario(ctx: &Ctx, c: ScenarioCmd) -> Result<()> {
    match c {
        ScenarioCmd::List => {
            for (file, _) in shipped() {
                let s = resolve_scenario(file.trim_end_matches(".toml"))?;
                let scripts: Vec<&str> = s.scripts.keys().map(String::as_str).collect();
                println!("{}: {} [scripts: {}]", s.id, s.description, scripts.join(", "));
            }
        }
        ScenarioCmd::Run { which, name, out } => {
            let s = resolve_scenario(&which)?;
            let run = run_script(&s, &name, &ctx.config.agent)?;
            let t = &run.trajectory;
            for step in &t.steps {
                println!("[{}] {:?}: {}", step.index, step.status, step.thought);
            }
            println!("terminal: {:?}; steps: {}", t.terminal, t.steps.len());
            println!("matched outcome: {}", run.judgment.matched.as_deref().unwrap_or("none"));
            if let Some(out) = out {
                t.write(&out)?;
            }
        }
        ScenarioCmd::Judge { which, trajectory } => {
            let s = resolve_scenario(&which)?;
            let t = Trajectory::read(&trajectory).map_err(|e| anyhow!(e))?;
            println!("{}", serde_json::to_string_pretty(&judge_outcome(&s, &t))?);
        }
        ScenarioCmd::Validate { which } => {
            let s = resolve_scenario(&which)?;
            println!("{}: {} outcomes, {} scripts", s.id, s.outcomes.len(), s.scripts.len());
        }
    }
    Ok(())
}

fn serve(ctx: &Ctx, a: ServeArgs) -> Result<()> {
    let mut agent = ctx.config.agent.clone();
    agent.approval_required |= a.approval;
    let source: Arc<dyn EpisodeSource> = match (&a.scenario, &a.corpus) {
        (Some(which), _) => Arc::new(ScenarioSource { scenario: Arc::new(resolve_scenario(which)?), config: agent }),
        (None, Some(dir)) => {
            let store = CorpusStore::open(dir);
            let corpus = Arc::new(store.load()?);
            let retriever = retriever(dir, &store, &corpus, &agent, IndexKind::Sparse)?;
            Arc::new(CorpusSource {
                corpus,
                retriever,
                gateway: ctx.gateway.clone(),
                config: agent,
                with_discussions: ctx.config.with_discussions,
            })
        }
        (None, None) => bail!("pass --scenario or --corpus"),
    };
    let data_dir = a.data_dir.clone().unwrap_or_else(|| ctx.config.service.data_dir.clone());
    let manager = Arc::new(SessionManager::open(&data_dir, source)?);
    let addr = format!(
        "{}:{}",
        a.bind.as_deref().unwrap_or(&ctx.config.service.bind),
        a.port.unwrap_or(ctx.config.service.port)
    );
    let rt = tokio::runtime::Builder::new_multi_thread().enable_all().build()?;
    rt.block_on(async move {
        let listener = tokio::net::TcpListener::bind(&addr).await.with_context(|| format!("binding {addr}"))?;
        println!("listening on http://{}", listener.local_addr()?);
        tokio::select! {
            r = crate::server::serve(listener, manager) => r.context("server stopped"),
            _ = tokio::signal::ctrl_c() => Ok(()),
        }
    })
}

fn session(c: SessionCmd) -> Result<()> {
    let out = match c {
        SessionCmd::Create { url, incident, mode } => {
            serde_json::to_string(&Client::new(&url).create(&SessionRequest { incident_id: incident, mode, config: None })?)?
        }
        SessionCmd::Get { url, id } => serde_json::to_string(&Client::new(&url).session(&id)?)?,
        SessionCmd::List { url } => serde_json::to_string(&Client::new(&url).list()?)?,
    };
    println!("{out}");
    Ok(())
}
