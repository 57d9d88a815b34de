//! Command-line interface.
//!
//! Exit codes: 0 success, 1 internal failure, 2 usage error, 3 missing
//! prerequisite (no map, uncalibrated difficulty).

use std::ffi::OsString;
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Duration;

use blockemu_core::calibration::{parse_range, select_difficulty, CalibrationError, DifficultyTimeMap};
use blockemu_core::consensus::{ConsensusError, ProviderRegistry, ProviderSetup, NAKAMOTO_REAL, NAKAMOTO_REPLAY};
use blockemu_core::engine::{Arrivals, Emulation, EngineError, Mode, SimConfig};
use blockemu_core::netqueue::LatencyModel;
use blockemu_core::puzzle::Difficulty;
use clap::{Args, Parser, Subcommand};

use crate::calibrate::{calibrate, CalibrationPlan, Skip};
use crate::fsutil::write_atomic;
use crate::host::{host_fingerprint, peak_rss_bytes, SystemProbe, WallTimer};
use crate::ledgerfile::{persist_ledger, Replication};
use crate::mapfile::{load_map, save_map, MapFileError};
use crate::report::RunReport;

pub const EXIT_INTERNAL: i32 = 1;
pub const EXIT_USAGE: i32 = 2;
pub const EXIT_MISSING: i32 = 3;

#[derive(Debug, Parser)]
#[command(name = "blockemu", version, about = "Proof-of-work blockchain emulator")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Measure real solve times and write a difficulty-time map.
    Calibrate(CalibrateArgs),
    /// Run an emulation and write a CSV report.
    Run(RunArgs),
    /// Print the calibrated difficulty closest to a target block interval.
    SelectDifficulty(SelectArgs),
}

#[derive(Debug, Clone)]
pub struct DifficultyRange(pub Vec<Difficulty>);

fn parse_difficulty_range(s: &str) -> Result<DifficultyRange, String> {
    parse_range(s).map(DifficultyRange).map_err(|e| e.to_string())
}

/// Milliseconds from `<number><ms|s|m>`.
pub fn parse_duration_ms(s: &str) -> Result<f64, String> {
    let (num, scale) = if let Some(n) = s.strip_suffix("ms") {
        (n, 1.0)
    } else if let Some(n) = s.strip_suffix('s') {
        (n, 1000.0)
    } else if let Some(n) = s.strip_suffix('m') {
        (n, 60_000.0)
    } else {
        return Err(format!("duration `{s}` needs a unit suffix: ms, s or m"));
    };
    match num.parse::<f64>() {
        Ok(v) if v.is_finite() && v >= 0.0 && !num.starts_with('+') => Ok(v * scale),
        _ => Err(format!("invalid duration `{s}`")),
    }
}

#[derive(Debug, Args)]
pub struct CalibrateArgs {
    /// Difficulty range `L.M:L.M`; every L and M in between is measured.
    #[arg(long, value_parser = parse_difficulty_range)]
    pub difficulties: DifficultyRange,
    #[arg(long, default_value_t = 30, value_parser = clap::value_parser!(u32).range(1..))]
    pub samples: u32,
    /// Wall-clock budget per difficulty, in seconds.
    #[arg(long, default_value_t = 120.0)]
    pub budget_s: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = 1, value_parser = clap::value_parser!(u32).range(1..))]
    pub workers: u32,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct RunArgs {
    #[arg(long, value_parser = clap::value_parser!(u32).range(1..))]
    pub nodes: u32,
    #[arg(long)]
    pub txns: u64,
    /// Puzzle difficulty `L.M`. In replay mode it defaults to the calibrated
    /// difficulty nearest `--target-interval`.
    #[arg(long)]
    pub difficulty: Option<Difficulty>,
    #[arg(long, default_value = "600s", value_parser = parse_duration_ms)]
    pub target_interval: f64,
    #[arg(long, default_value = "replay")]
    pub mode: Mode,
    /// Provider name; defaults to nakamoto-real or nakamoto-replay by mode.
    #[arg(long)]
    pub consensus: Option<String>,
    #[arg(long, env = "BLOCKEMU_MAP")]
    pub map: Option<PathBuf>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Report CSV path.
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long, default_value_t = 100, value_parser = clap::value_parser!(u32).range(1..))]
    pub block_size: u32,
    /// Transactions per simulated second.
    #[arg(long, default_value_t = 100.0)]
    pub txn_rate: f64,
    /// Poisson transaction arrivals instead of a uniform schedule.
    #[arg(long)]
    pub poisson: bool,
    #[arg(long, default_value_t = 250)]
    pub payload_size: u32,
    #[arg(long, default_value_t = 100.0)]
    pub latency_mean_ms: f64,
    #[arg(long, default_value_t = 20.0)]
    pub latency_stddev_ms: f64,
    #[arg(long, default_value_t = 1.0)]
    pub latency_floor_ms: f64,
    /// Write `ledger_<node>.txt` for every node into this directory.
    #[arg(long)]
    pub ledger_dir: Option<PathBuf>,
    /// Store transaction bodies only for blocks a node created or voted for.
    #[arg(long)]
    pub partial_replication: bool,
    /// Stop after this many events.
    #[arg(long)]
    pub max_events: Option<u64>,
}

#[derive(Debug, Args)]
pub struct SelectArgs {
    #[arg(long, env = "BLOCKEMU_MAP")]
    pub map: PathBuf,
    /// Target block interval, e.g. `600s` or `10m`.
    #[arg(long, value_parser = parse_duration_ms)]
    pub target_interval: f64,
}

#[derive(Debug)]
pub struct CliError {
    pub code: i32,
    pub message: String,
}

impl CliError {
    fn new(code: i32, message: impl Into<String>) -> Self {
        CliError {
            code,
            message: message.into(),
        }
    }
}

fn miss_hint(d: Difficulty) -> String {
    format!("difficulty {d} is not calibrated; run `blockemu calibrate --difficulties {d}:{d} --out <map>` first")
}

fn map_error(e: MapFileError) -> CliError {
    match e {
        MapFileError::Read { .. } => CliError::new(EXIT_MISSING, e.to_string()),
        _ => CliError::new(EXIT_INTERNAL, e.to_string()),
    }
}

fn consensus_error(e: ConsensusError) -> CliError {
    match e {
        ConsensusError::Calibration(CalibrationError::Miss(d)) => CliError::new(EXIT_MISSING, miss_hint(d)),
        ConsensusError::MissingMap => CliError::new(EXIT_MISSING, "this provider needs --map or BLOCKEMU_MAP"),
        ConsensusError::UnknownProvider(_) => CliError::new(EXIT_USAGE, e.to_string()),
        other => CliError::new(EXIT_INTERNAL, other.to_string()),
    }
}

fn engine_error(e: EngineError) -> CliError {
    match e {
        EngineError::Config(c) => CliError::new(EXIT_USAGE, c.to_string()),
        EngineError::Calibration(CalibrationError::Miss(d)) => CliError::new(EXIT_MISSING, miss_hint(d)),
        EngineError::MissingMap => CliError::new(EXIT_MISSING, "replay mode needs --map or BLOCKEMU_MAP"),
        EngineError::Consensus(c) => consensus_error(c),
        other => CliError::new(EXIT_INTERNAL, other.to_string()),
    }
}

fn cmd_calibrate(args: &CalibrateArgs) -> Result<(), CliError> {
    if !(args.budget_s > 0.0 && args.budget_s.is_finite()) {
        return Err(CliError::new(EXIT_USAGE, "--budget-s must be positive"));
    }
    let plan = CalibrationPlan {
        difficulties: args.difficulties.0.clone(),
        samples: args.samples as usize,
        budget: Duration::from_secs_f64(args.budget_s),
        seed: args.seed,
        workers: args.workers as usize,
    };
    let report = calibrate(&plan, &host_fingerprint(), |d, outcome| match outcome {
        Ok(s) => eprintln!(
            "{d}: mean {:.3} ms, stddev {:.3} ms over {} samples",
            s.mean_ms, s.stddev_ms, s.samples
        ),
        Err(Skip::Budget { completed }) => eprintln!(
            "warning: {d} exceeded the {}s budget after {completed} of {} samples; left out of the map",
            args.budget_s, args.samples
        ),
        Err(Skip::Dominated { by }) => {
            eprintln!("warning: {d} skipped; the easier {by} already exceeded the budget")
        }
    })
    .map_err(|e| CliError::new(EXIT_USAGE, e.to_string()))?;
    if report.map.is_empty() {
        return Err(CliError::new(EXIT_INTERNAL, "every difficulty exceeded its budget; nothing written"));
    }
    save_map(&report.map, &args.out).map_err(|e| CliError::new(EXIT_INTERNAL, e.to_string()))?;
    println!("wrote {} entries to {}", report.map.len(), args.out.display());
    Ok(())
}

fn load_required_map(path: Option<&Path>) -> Result<Arc<DifficultyTimeMap>, CliError> {
    let path = path.ok_or_else(|| CliError::new(EXIT_MISSING, "replay mode needs --map or BLOCKEMU_MAP"))?;
    load_map(path).map(Arc::new).map_err(map_error)
}

fn cmd_run(args: &RunArgs) -> Result<(), CliError> {
    let map = match (&args.map, args.mode) {
        (Some(path), _) => Some(load_map(path).map(Arc::new).map_err(map_error)?),
        (None, Mode::Replay) => Some(load_required_map(None)?),
        (None, Mode::Real) => None,
    };
    let difficulty = match (args.difficulty, &map) {
        (Some(d), _) => d,
        (None, Some(map)) => select_difficulty(map, args.target_interval)
            .map_err(|e| CliError::new(EXIT_MISSING, format!("{e}; calibrate first")))?,
        (None, None) => return Err(CliError::new(EXIT_USAGE, "real mode needs --difficulty")),
    };
    let config = SimConfig {
        mode: args.mode,
        seed: args.seed,
        block_size: args.block_size,
        latency: LatencyModel {
            mean_ms: args.latency_mean_ms,
            stddev_ms: args.latency_stddev_ms,
            floor_ms: args.latency_floor_ms,
        },
        txn_rate: args.txn_rate,
        arrivals: if args.poisson { Arrivals::Poisson } else { Arrivals::Uniform },
        payload_size: args.payload_size,
        max_events: args.max_events,
        ..SimConfig::new(args.nodes, args.txns, difficulty)
    };
    if let Some(stats) = map.as_deref().and_then(|m| m.get(difficulty).ok()) {
        if args.nodes > 1 && args.max_events.is_none() && stats.mean_ms < args.latency_mean_ms {
            eprintln!(
                "warning: mean solve time {:.3} ms is below the {} ms mean latency; expect many competing sibling blocks per commit",
                stats.mean_ms, args.latency_mean_ms
            );
        }
    }
    let name = args.consensus.clone().unwrap_or_else(|| {
        match args.mode {
            Mode::Real => NAKAMOTO_REAL,
            Mode::Replay => NAKAMOTO_REPLAY,
        }
        .to_string()
    });
    let registry = ProviderRegistry::with_builtins();
    let provider = registry
        .build(
            &name,
            &ProviderSetup {
                map: map.clone(),
                timer: Arc::new(WallTimer::default()),
            },
        )
        .map_err(consensus_error)?;
    let probe = SystemProbe::default();
    let mut emulation =
        Emulation::new(config.clone(), provider.as_ref(), map.as_deref(), &probe).map_err(engine_error)?;
    let mut metrics = emulation.run().map_err(engine_error)?;
    if let Some(hwm) = peak_rss_bytes() {
        metrics.peak_rss_bytes = Some(metrics.peak_rss_bytes.map_or(hwm, |p| p.max(hwm)));
    }

    if let Some(out) = &args.out {
        let report = RunReport {
            config: &config,
            consensus: &name,
            map_host: map.as_deref().map(DifficultyTimeMap::host_fingerprint),
            metrics: &metrics,
        };
        write_atomic(out, report.render().as_bytes())
            .map_err(|e| CliError::new(EXIT_INTERNAL, format!("cannot write report {}: {e}", out.display())))?;
    }
    if let Some(dir) = &args.ledger_dir {
        fs::create_dir_all(dir)
            .map_err(|e| CliError::new(EXIT_INTERNAL, format!("cannot create {}: {e}", dir.display())))?;
        for node in emulation.nodes() {
            let replication = if args.partial_replication {
                Replication::Partial(node.votes_cast())
            } else {
                Replication::Full
            };
            persist_ledger(node.store(), node.id(), dir, replication)
                .map_err(|e| CliError::new(EXIT_INTERNAL, e.to_string()))?;
        }
    }
    println!(
        "difficulty={} completed={} blocks_committed={} txns_committed={} forks={} simulated_ms={} wall_ms={:.1}",
        difficulty,
        metrics.completed,
        metrics.blocks_committed,
        metrics.txns_committed,
        metrics.forks_observed,
        metrics.simulated_ms,
        metrics.wall_clock_ms
    );
    if !metrics.completed {
        eprintln!("warning: stopped after {} events before all transactions committed", metrics.events_processed);
    }
    Ok(())
}

fn cmd_select(args: &SelectArgs) -> Result<(), CliError> {
    let map = load_map(&args.map).map_err(map_error)?;
    let d = select_difficulty(&map, args.target_interval)
        .map_err(|e| CliError::new(EXIT_MISSING, format!("{e}; calibrate first")))?;
    let stats = map.get(d).expect("selected from the map");
    println!("{d} mean_ms={}", stats.mean_ms);
    Ok(())
}

/// Parses `args` (program name first), runs the command and returns the
/// process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return e.exit_code();
        }
    };
    let result = match &cli.command {
        Command::Calibrate(a) => cmd_calibrate(a),
        Command::Run(a) => cmd_run(a),
        Command::SelectDifficulty(a) => cmd_select(a),
    };
    match result {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {}", e.message);
            e.code
        }
    }
}
