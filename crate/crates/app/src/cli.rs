//! Command-line front end. `run` maps every outcome to an exit code:
//! 0 success, 1 analysis or I/O error, 2 usage error.

use std::ffi::OsString;
use std::io::Write as _;
use std::net::{IpAddr, SocketAddr};
use std::path::{Path, PathBuf};
use std::sync::Arc;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;
use serde_json::json;

use netsig_core::detectors::{DetectorConfig, Method};
use netsig_core::encoder::{EncodedCorpus, SCHEMA_VERSION};
use netsig_core::eval::{compare_detectors, generate, CorpusSpec, DetectorRun};
use netsig_core::ingest::{load_snapshot, Level};
use netsig_core::pipeline::AnalysisBundle;
use netsig_core::retune::RetuneLog;
use netsig_core::severity::{RankMode, SeverityWeights};
use netsig_core::signatures::MiningParams;

use crate::service::{self, AppState};
use crate::state::{load_truth, read_file, to_pretty_json, write_file, AnalyzeOptions, AppError, Session, MANIFEST_FILE};

pub const STATE_ENV: &str = "NETSIG_STATE";
const DEFAULT_STATE: &str = "netsig-state";

#[derive(Debug, Parser)]
#[command(name = "netsig", version, about = "Structural outlier detection for network configuration snapshots")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Mine signatures, detect outliers and write a state directory.
    Analyze(AnalyzeArgs),
    /// Generate a labeled synthetic snapshot.
    Generate(GenerateArgs),
    /// Compare detectors against a ground-truth file.
    Eval(EvalArgs),
    /// Operate on the retune log of a state directory.
    Retune {
        #[command(subcommand)]
        command: RetuneCommand,
    },
    /// Print ranked findings or the flow report from a state directory.
    Report(ReportArgs),
    /// Serve a state directory over HTTP.
    Serve(ServeArgs),
    /// Print intermediate pipeline products as JSON.
    Dump(DumpArgs),
}

#[derive(Debug, Args)]
pub struct StateArg {
    /// State directory.
    #[arg(long = "state", env = STATE_ENV, default_value = DEFAULT_STATE)]
    pub dir: PathBuf,
}

#[derive(Debug, Args)]
pub struct AnalyzeArgs {
    /// Directory of `.cfg` / `.json` device files.
    pub snapshot: PathBuf,
    #[arg(long, default_value = "signature")]
    pub detector: Method,
    /// Output state directory.
    #[arg(long, env = STATE_ENV, default_value = DEFAULT_STATE)]
    pub out: PathBuf,
    /// Ground-truth labels; enables metrics.
    #[arg(long)]
    pub truth: Option<PathBuf>,
    /// Severity weights (TOML, partial override of the defaults).
    #[arg(long)]
    pub weights: Option<PathBuf>,
    /// Mining parameters (JSON, partial override of the defaults).
    #[arg(long)]
    pub mining: Option<PathBuf>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

#[derive(Debug, Args)]
pub struct GenerateArgs {
    /// Corpus spec (JSON). Omitted fields take their defaults.
    #[arg(long)]
    pub spec: Option<PathBuf>,
    #[arg(long)]
    pub out: PathBuf,
    /// Overrides the corpus spec's seed.
    #[arg(long)]
    pub seed: Option<u64>,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[arg(long)]
    pub snapshot: PathBuf,
    #[arg(long)]
    pub truth: PathBuf,
    /// `all` or a comma-separated list of detectors; `signature+retune` adds the scripted retune row.
    #[arg(long, default_value = "all")]
    pub detectors: String,
    /// Write comparison.json, comparison.txt and a run manifest here.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Print JSON instead of the aligned table.
    #[arg(long)]
    pub json: bool,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

#[derive(Debug, Subcommand)]
pub enum RetuneCommand {
    /// Apply a retune log to the state's current generation.
    Apply {
        #[arg(long)]
        log: PathBuf,
        #[command(flatten)]
        state: StateArg,
    },
    /// Print the state's retune log.
    Show {
        #[command(flatten)]
        state: StateArg,
    },
}

#[derive(Debug, Args)]
pub struct ReportArgs {
    #[command(flatten)]
    pub state: StateArg,
    /// Print the three-layer flow report instead of findings.
    #[arg(long)]
    pub sankey: bool,
    #[arg(long, default_value = "severity")]
    pub rank: RankMode,
    /// One JSON object per line.
    #[arg(long)]
    pub json: bool,
    #[arg(long)]
    pub limit: Option<usize>,
}

#[derive(Debug, Args)]
pub struct ServeArgs {
    #[command(flatten)]
    pub state: StateArg,
    #[arg(long, default_value_t = 8080)]
    pub port: u16,
    #[arg(long, default_value = "127.0.0.1")]
    pub bind: IpAddr,
    /// Static UI assets served for non-API paths.
    #[arg(long)]
    pub assets: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum DumpWhat {
    Properties,
    Vectors,
    Graph,
    Diagnostics,
}

#[derive(Debug, Args)]
pub struct DumpArgs {
    #[arg(value_enum)]
    pub what: DumpWhat,
    pub snapshot: PathBuf,
}

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error(transparent)]
    App(#[from] AppError),
    #[error("{0}")]
    Usage(String),
}

impl CliError {
    fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 2,
            CliError::App(_) => 1,
        }
    }
}

fn app<E: Into<AppError>>(e: E) -> CliError {
    CliError::App(e.into())
}

fn invalid(msg: impl Into<String>) -> CliError {
    CliError::App(AppError::Invalid(msg.into()))
}

/// Parses `argv` (program name first) and runs it.
pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    match execute(cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

pub fn execute(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Analyze(a) => analyze(a),
        Command::Generate(a) => generate_cmd(a),
        Command::Eval(a) => eval(a),
        Command::Retune { command } => match command {
            RetuneCommand::Apply { log, state } => retune_apply(&log, &state.dir),
            RetuneCommand::Show { state } => {
                let s = Session::load(&state.dir)?;
                print!("{}", s.log.to_jsonl());
                Ok(())
            }
        },
        Command::Report(a) => report(a),
        Command::Serve(a) => serve(a),
        Command::Dump(a) => dump(a),
    }
}

fn analyze(a: AnalyzeArgs) -> Result<(), CliError> {
    let mut mining = match &a.mining {
        Some(p) => serde_json::from_str::<MiningParams>(&read_file(p)?).map_err(|e| invalid(format!("{}: {e}", p.display())))?,
        None => MiningParams::default(),
    };
    mining.seed = a.seed;
    let severity = match &a.weights {
        Some(p) => SeverityWeights::from_toml(&read_file(p)?).map_err(app)?,
        None => SeverityWeights::default(),
    };
    let mut detector = DetectorConfig::with_method(a.detector);
    detector.seed = a.seed;
    let session = Session::analyze(&a.snapshot, AnalyzeOptions { detector, mining, severity, truth: a.truth })?;
    report_diagnostics(&session);
    session.save(&a.out)?;
    let c = &session.manifest.counts;
    println!(
        "{} devices, {} properties, {} signatures ({} violated), {} findings; generation {}; state in {}",
        c.devices,
        c.properties,
        c.signatures,
        c.violated_signatures,
        c.findings,
        session.generation(),
        a.out.display()
    );
    if let Some(m) = session.metrics() {
        println!("precision {} recall {}", m.precision, m.recall);
    }
    Ok(())
}

fn report_diagnostics(session: &Session) {
    for d in &session.diagnostics {
        match d.level {
            Level::Error => log::error!("{}", d.message()),
            Level::Warning => log::warn!("{}", d.message()),
            _ => log::info!("{}", d.message()),
        }
    }
    for w in &session.set.warnings {
        log::warn!("{w}");
    }
}

#[derive(Serialize)]
struct GenerateManifest<'a> {
    tool: &'a str,
    version: &'a str,
    command: &'a str,
    schema_version: u32,
    seed: u64,
    spec: &'a CorpusSpec,
    devices: usize,
    labeled: usize,
    injected: usize,
    snapshot_dir: &'a str,
    truth: &'a str,
}

fn generate_cmd(a: GenerateArgs) -> Result<(), CliError> {
    let mut spec = match &a.spec {
        Some(p) => serde_json::from_str::<CorpusSpec>(&read_file(p)?).map_err(|e| invalid(format!("{}: {e}", p.display())))?,
        None => CorpusSpec::default(),
    };
    if let Some(seed) = a.seed {
        spec.seed = seed;
    }
    let g = generate(&spec).map_err(|e| invalid(e.to_string()))?;
    let snap_dir = a.out.join("snapshot");
    g.write_configs(&snap_dir).map_err(|e| invalid(format!("{}: {e}", snap_dir.display())))?;
    write_file(&a.out.join("truth.json"), &g.truth.to_json())?;
    write_file(&a.out.join("corpus.spec.json"), &to_pretty_json(&spec))?;
    let manifest = GenerateManifest {
        tool: "netsig",
        version: env!("CARGO_PKG_VERSION"),
        command: "generate",
        schema_version: SCHEMA_VERSION,
        seed: spec.seed,
        spec: &spec,
        devices: g.files.len(),
        labeled: g.truth.labels.len(),
        injected: g.truth.bug_count(),
        snapshot_dir: "snapshot",
        truth: "truth.json",
    };
    write_file(&a.out.join(MANIFEST_FILE), &to_pretty_json(&manifest))?;
    println!(
        "{} devices, {} properties, {} injected bugs written to {}",
        g.files.len(),
        g.truth.labels.len(),
        g.truth.bug_count(),
        a.out.display()
    );
    Ok(())
}

/// `all` expands to the five standard rows.
pub fn parse_detector_list(raw: &str, seed: u64) -> Result<Vec<DetectorRun>, String> {
    let all = DetectorRun::standard(seed);
    if raw.trim() == "all" {
        return Ok(all);
    }
    let mut runs = Vec::new();
    for name in raw.split(',').map(str::trim).filter(|s| !s.is_empty()) {
        let run = match name.strip_suffix("+retune") {
            Some(base) => {
                let m: Method = base.parse()?;
                if m != Method::Signature {
                    return Err(format!("`{name}`: retune is only defined for the signature detector"));
                }
                all.iter().find(|r| r.retune).cloned().expect("standard runs include the retune row")
            }
            None => {
                let m: Method = name.parse()?;
                let mut r = DetectorRun::plain(m);
                r.config.seed = seed;
                r
            }
        };
        if runs.iter().any(|r: &DetectorRun| r.name == run.name) {
            return Err(format!("detector `{}` listed twice", run.name));
        }
        runs.push(run);
    }
    if runs.is_empty() {
        return Err("no detectors given".into());
    }
    Ok(runs)
}

fn eval(a: EvalArgs) -> Result<(), CliError> {
    let runs = parse_detector_list(&a.detectors, a.seed).map_err(CliError::Usage)?;
    let snapshot_path = a.snapshot.canonicalize().map_err(|source| AppError::Io { path: a.snapshot.clone(), source })?;
    let snapshot = load_snapshot(&snapshot_path).map_err(app)?;
    let truth = load_truth(&a.truth)?;
    let bundle = AnalysisBundle::build(snapshot).map_err(app)?;
    let params = MiningParams { seed: a.seed, ..MiningParams::default() };
    let table = compare_detectors(&bundle, &truth, &runs, &params);
    if let Some(out) = &a.out {
        write_file(&out.join("comparison.json"), &to_pretty_json(&table))?;
        write_file(&out.join("comparison.txt"), &table.to_text())?;
        let manifest = json!({
            "tool": "netsig",
            "version": env!("CARGO_PKG_VERSION"),
            "command": "eval",
            "snapshot": snapshot_path,
            "snapshot_id": bundle.snapshot.snapshot_id,
            "truth": a.truth.canonicalize().unwrap_or_else(|_| a.truth.clone()),
            "schema_version": SCHEMA_VERSION,
            "seed": a.seed,
            "mining": params,
            "runs": runs,
        });
        write_file(&out.join(MANIFEST_FILE), &to_pretty_json(&manifest))?;
    }
    if a.json {
        print!("{}", to_pretty_json(&table));
    } else {
        print!("{}", table.to_text());
    }
    let failed: Vec<&str> = table.rows.iter().filter(|r| r.error.is_some()).map(|r| r.detector.as_str()).collect();
    if !failed.is_empty() {
        return Err(invalid(format!("detectors failed: {}", failed.join(", "))));
    }
    Ok(())
}

fn retune_apply(log_path: &Path, state_dir: &Path) -> Result<(), CliError> {
    let text = read_file(log_path)?;
    let log = RetuneLog::from_jsonl(&text).map_err(|source| AppError::Log { path: log_path.to_owned(), source })?;
    let mut session = Session::load(state_dir)?;
    if log.base_generation != session.generation() {
        return Err(invalid(format!(
            "{} starts at generation {}, state is at generation {}",
            log_path.display(),
            log.base_generation,
            session.generation()
        )));
    }
    let n = log.actions.len();
    for (i, action) in log.actions.into_iter().enumerate() {
        session.apply(action).map_err(|e| invalid(format!("action #{i}: {e}")))?;
    }
    session.save(state_dir)?;
    println!("applied {n} actions; generation {}; {} findings", session.generation(), session.findings.len());
    Ok(())
}

fn report(a: ReportArgs) -> Result<(), CliError> {
    let session = Session::load(&a.state.dir)?;
    let stdout = std::io::stdout();
    let mut out = stdout.lock();
    let io = |source| AppError::Io { path: PathBuf::from("<stdout>"), source };
    if a.sankey {
        let sk = session.sankey();
        write!(out, "{}", to_pretty_json(&sk)).map_err(io)?;
        return Ok(());
    }
    let findings = session.ranked(a.rank);
    let shown = findings.iter().take(a.limit.unwrap_or(usize::MAX));
    if a.json {
        for f in shown {
            writeln!(out, "{}", serde_json::to_string(f).expect("findings serialize")).map_err(io)?;
        }
        return Ok(());
    }
    writeln!(out, "{:>5}  {:>9}  {:>9}  {:<28}  {:<8}  property", "rank", "severity", "score", "problem", "sig").map_err(io)?;
    for f in shown {
        writeln!(
            out,
            "{:>5}  {:>9.3}  {:>9.3}  {:<28}  {:<8}  {}",
            f.rank.unwrap_or(0),
            f.severity.unwrap_or(f64::NAN),
            f.outlier_score,
            f.problem_type.as_str(),
            f.violated_signature.map_or_else(|| "-".to_owned(), |s| s.to_string()),
            f.property_id
        )
        .map_err(io)?;
    }
    let cc = session.cluster_counts();
    writeln!(
        out,
        "{} findings; {} signatures, {} violated; generation {}",
        findings.len(),
        cc.signatures,
        cc.violated,
        session.generation()
    )
    .map_err(io)?;
    Ok(())
}

fn serve(a: ServeArgs) -> Result<(), CliError> {
    let session = Session::load(&a.state.dir)?;
    let state = Arc::new(AppState { session: tokio::sync::RwLock::new(session), state_dir: Some(a.state.dir.clone()) });
    let rt = tokio::runtime::Builder::new_multi_thread()
        .enable_all()
        .build()
        .map_err(|source| AppError::Io { path: PathBuf::from("<runtime>"), source })?;
    let addr = SocketAddr::new(a.bind, a.port);
    rt.block_on(service::serve(state, a.assets, addr))
        .map_err(|source| AppError::Io { path: PathBuf::from(addr.to_string()), source })?;
    Ok(())
}

fn dump(a: DumpArgs) -> Result<(), CliError> {
    let snapshot = load_snapshot(&a.snapshot).map_err(app)?;
    let text = match a.what {
        DumpWhat::Diagnostics => {
            let mut d = snapshot.ingest_warnings.clone();
            d.extend(netsig_core::ingest::validate_snapshot(&snapshot));
            to_pretty_json(&d)
        }
        what => {
            let bundle = AnalysisBundle::build(snapshot).map_err(app)?;
            match what {
                DumpWhat::Properties => to_pretty_json(&bundle.properties),
                DumpWhat::Graph => to_pretty_json(&bundle.graph),
                _ => vectors_jsonl(&bundle.corpus),
            }
        }
    };
    print!("{text}");
    Ok(())
}

/// One feature vector per line; interned categorical ids are also given
/// resolved as `categorical_values`.
pub fn vectors_jsonl(corpus: &EncodedCorpus) -> String {
    let mut out = String::new();
    for v in &corpus.vectors {
        let mut line = serde_json::to_value(v).expect("vectors serialize");
        line["categorical_values"] = json!(corpus.categorical_values(v));
        out.push_str(&line.to_string());
        out.push('\n');
    }
    out
}
