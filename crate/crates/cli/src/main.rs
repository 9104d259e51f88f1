//! `engage`: run the ingestion endpoint, simulate traffic, and mine logs.

mod report;

use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::net::{IpAddr, SocketAddr};
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use engage_core::ingest::http::{start, ServerConfig};
use engage_core::ingest::{
    load_denylist, scan_path, write_log, ClassifierConfig, IngestConfig, LogStore, ScanFilter,
    ScanOutput,
};
use engage_core::miner::{attention_scroll_correlation, compare_log, item_stats, MineError};
use engage_core::simulator::wire::post_sessions;
use engage_core::simulator::{session_log, simulate, SessionProfile};
use tracing::{info, warn};
use tracing_subscriber::EnvFilter;

#[derive(Debug, Parser)]
#[command(
    name = "engage",
    version,
    about = "Engagement telemetry: collect, simulate, mine"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Run the ingestion endpoint until interrupted.
    Serve(ServeArgs),
    /// Write a synthetic event log.
    Simulate(SimulateArgs),
    /// Mine a log into the per-item feature table.
    Mine(MineArgs),
    /// Compare page-load and pinging measurements.
    Compare(CompareArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Csv,
    Json,
}

#[derive(Debug, Args)]
struct ServeArgs {
    /// Directory holding the daily log partitions.
    #[arg(long, env = "ENGAGE_DATA_DIR", default_value = "data")]
    data_dir: PathBuf,
    #[arg(long, env = "ENGAGE_PORT", default_value_t = 8080)]
    port: u16,
    #[arg(long, env = "ENGAGE_BIND", default_value = "127.0.0.1")]
    bind: IpAddr,
    /// Browser collector served at /v1/collector.js.
    #[arg(long, env = "ENGAGE_COLLECTOR_SCRIPT")]
    collector_script: Option<PathBuf>,
    /// User-agent denylist, one substring per line.
    #[arg(long, env = "ENGAGE_DENYLIST")]
    denylist: Option<PathBuf>,
    /// Reports per second one source may sustain.
    #[arg(long, env = "ENGAGE_RATE_CEILING", default_value_t = 10.0)]
    rate_ceiling: f64,
    #[arg(long, env = "ENGAGE_QUEUE_CAPACITY", default_value_t = 65_536)]
    queue_capacity: usize,
    #[arg(long, env = "ENGAGE_WORKERS", default_value_t = 4)]
    workers: usize,
}

#[derive(Debug, Args)]
struct SimulateArgs {
    #[arg(long, env = "ENGAGE_SEED", default_value_t = 7)]
    seed: u64,
    #[arg(long, env = "ENGAGE_SESSIONS", default_value_t = 100)]
    sessions: u64,
    /// Built-in profile name or path to a profile file.
    #[arg(long, env = "ENGAGE_PROFILE", default_value = "human")]
    profile: String,
    /// Log destination; stdout when absent.
    #[arg(long, env = "ENGAGE_OUT")]
    out: Option<PathBuf>,
    /// Post the sessions to this events endpoint instead of writing a log.
    #[arg(long, env = "ENGAGE_POST", conflicts_with = "out")]
    post: Option<String>,
    #[arg(long, env = "ENGAGE_CONCURRENCY", default_value_t = 8)]
    concurrency: usize,
    /// Print a built-in profile as TOML and exit.
    #[arg(long)]
    print_profile: bool,
}

#[derive(Debug, Args)]
struct Source {
    /// Log file, or a directory of partitions.
    #[arg(long, env = "ENGAGE_INPUT")]
    input: Option<PathBuf>,
    /// Store directory, read when --input is absent.
    #[arg(long, env = "ENGAGE_DATA_DIR", default_value = "data")]
    data_dir: PathBuf,
}

#[derive(Debug, Args)]
struct MineArgs {
    #[command(flatten)]
    source: Source,
    #[arg(long, env = "ENGAGE_OUT")]
    out: Option<PathBuf>,
    #[arg(long, env = "ENGAGE_FORMAT", value_enum, default_value_t = Format::Csv)]
    format: Format,
}

#[derive(Debug, Args)]
struct CompareArgs {
    #[command(flatten)]
    source: Source,
    /// JSON totals to compare instead of a log.
    #[arg(long, env = "ENGAGE_TOTALS", conflicts_with = "input")]
    totals: Option<PathBuf>,
    #[arg(long, env = "ENGAGE_OUT")]
    out: Option<PathBuf>,
    #[arg(long, env = "ENGAGE_FORMAT", value_enum, default_value_t = Format::Csv)]
    format: Format,
    /// Where to write the attention/scroll-depth percentile curve.
    #[arg(long, env = "ENGAGE_CURVE")]
    curve: Option<PathBuf>,
}

fn main() -> ExitCode {
    tracing_subscriber::fmt()
        .with_env_filter(
            EnvFilter::try_from_env("ENGAGE_LOG").unwrap_or_else(|_| EnvFilter::new("info")),
        )
        .with_writer(io::stderr)
        .init();
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Serve(args) => serve(args),
        Command::Simulate(args) => simulate_cmd(args),
        Command::Mine(args) => mine(args),
        Command::Compare(args) => compare(args),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}

fn output(path: Option<&Path>) -> Result<Box<dyn Write>> {
    Ok(match path {
        Some(p) => Box::new(BufWriter::new(
            File::create(p).with_context(|| format!("creating {}", p.display()))?,
        )),
        None => Box::new(BufWriter::new(io::stdout().lock())),
    })
}

fn serve(args: ServeArgs) -> Result<()> {
    let denylist = match &args.denylist {
        Some(path) => load_denylist(path).with_context(|| format!("reading {}", path.display()))?,
        None => ClassifierConfig::default().denylist,
    };
    let store = LogStore::open(&args.data_dir)?;
    let config = ServerConfig {
        addr: SocketAddr::new(args.bind, args.port),
        ingest: IngestConfig {
            queue_capacity: args.queue_capacity,
            workers: args.workers,
            classifier: ClassifierConfig {
                denylist,
                rate_ceiling: args.rate_ceiling,
                ..ClassifierConfig::default()
            },
            ..IngestConfig::default()
        },
        collector_script: args.collector_script,
        stop_on_ctrl_c: true,
    };
    let server = start(config, Arc::new(store))?;
    println!("listening on {}", server.url(""));
    io::stdout().flush()?;
    let stats = server.join()?;
    info!(?stats, "stopped");
    println!("{}", serde_json::to_string(&stats)?);
    Ok(())
}

fn simulate_cmd(args: SimulateArgs) -> Result<()> {
    let profile = SessionProfile::resolve(&args.profile)?;
    if args.print_profile {
        print!("{}", profile.to_toml());
        return Ok(());
    }
    let timelines = simulate(&profile, args.seed, args.sessions)?;
    if let Some(url) = &args.post {
        let stats = post_sessions(url, &timelines, args.concurrency)?;
        println!("{}", serde_json::to_string(&stats)?);
        return Ok(());
    }
    let mut out = output(args.out.as_deref())?;
    for timeline in &timelines {
        write_log(&mut out, &session_log(timeline)?)?;
    }
    out.flush()?;
    Ok(())
}

fn load(source: &Source) -> Result<ScanOutput> {
    let path = source.input.as_deref().unwrap_or(&source.data_dir);
    if !path.exists() {
        bail!("{} does not exist", path.display());
    }
    let scanned = scan_path(path, &ScanFilter::all())?;
    if !scanned.corrupt.is_empty() {
        for c in scanned.corrupt.iter().take(5) {
            warn!(partition = %c.partition, line = c.line + 1, error = %c.error, "skipping corrupt record");
        }
        eprintln!("warning: {} corrupt records skipped", scanned.corrupt.len());
    }
    Ok(scanned)
}

fn mine(args: MineArgs) -> Result<()> {
    let scanned = load(&args.source)?;
    let stats = item_stats(&scanned.events);
    let invalid: u64 = stats.values().map(|f| f.errors).sum();
    if invalid > 0 {
        eprintln!("warning: {invalid} invalid report events skipped");
    }
    let mut out = output(args.out.as_deref())?;
    report::write_features(&mut out, &stats, args.format)?;
    out.flush()?;
    Ok(())
}

fn insufficient(e: MineError) -> anyhow::Error {
    match e {
        MineError::InsufficientData(_) => anyhow::anyhow!("{e}"),
        other => anyhow::anyhow!("insufficient data: {other}"),
    }
}

fn compare(args: CompareArgs) -> Result<()> {
    let (comparison, correlation) = match &args.totals {
        Some(path) => {
            let text = std::fs::read_to_string(path)
                .with_context(|| format!("reading {}", path.display()))?;
            (report::Summary::from_totals_json(&text)?, None)
        }
        None => {
            let scanned = load(&args.source)?;
            if scanned.events.is_empty() {
                bail!("insufficient data: the input holds no events");
            }
            let comparison = compare_log(&scanned.events).map_err(insufficient)?;
            (
                report::Summary::from(&comparison),
                Some(attention_scroll_correlation(&item_stats(&scanned.events))),
            )
        }
    };
    let pearson = match (&correlation, &args.curve) {
        (Some(Ok(c)), _) => Some(c.pearson),
        (Some(Err(e)), Some(_)) => return Err(insufficient(e.clone())),
        (None, Some(_)) => bail!("insufficient data: a percentile curve needs an event log"),
        (Some(Err(e)), None) => {
            warn!(error = %e, "no correlation reported");
            None
        }
        (None, None) => None,
    };
    let mut out = output(args.out.as_deref())?;
    report::write_comparison(&mut out, &comparison, pearson, args.format)?;
    out.flush()?;
    if let (Some(path), Some(Ok(c))) = (&args.curve, &correlation) {
        let mut curve = output(Some(path))?;
        report::write_curve(&mut curve, c)?;
        curve.flush()?;
    }
    Ok(())
}
