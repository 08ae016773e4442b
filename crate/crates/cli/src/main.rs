//! `quantrisk` command-line driver.
//!
//! Exit codes: 0 success, 1 configuration error, 2 data error, 3 job
//! failure (the manifest lists the failed jobs).

mod config;
mod pipeline;
mod store;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use log::info;
use quantrisk::dataio::{Scaler, Segment};
use serde::Serialize;

use config::ExperimentConfig;
use pipeline::{load, Context};
use store::Store;

/// Environment override for the output directory.
const OUTPUT_ENV: &str = "QUANTRISK_OUTPUT";

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("config error: {0}")]
    Config(String),
    #[error("data error: {0}")]
    Data(String),
    #[error("i/o error: {0}")]
    Io(String),
    #[error("job failure: {0}")]
    Job(String),
    #[error("missing artifacts (run the stage that produces them first): {}", .0.join(", "))]
    Missing(Vec<String>),
}

impl CliError {
    fn exit_code(&self) -> u8 {
        match self {
            CliError::Config(_) | CliError::Missing(_) => 1,
            CliError::Data(_) | CliError::Io(_) => 2,
            CliError::Job(_) => 3,
        }
    }
}

impl From<quantrisk::Error> for CliError {
    fn from(e: quantrisk::Error) -> Self {
        use quantrisk::Error as E;
        match e {
            E::Split(_) | E::InvalidArgument(_) | E::Dimension { .. } => CliError::Config(e.to_string()),
            E::Diverged { .. } | E::AtOrigin { .. } | E::Incomplete(_) | E::Checkpoint(_) => CliError::Job(e.to_string()),
            _ => CliError::Data(e.to_string()),
        }
    }
}

#[derive(Debug, Parser)]
#[command(name = "quantrisk", version, about = "Penalized neural quantile forecasts with expanding-window evaluation")]
struct Cli {
    /// Experiment config (TOML).
    #[arg(long, global = true, default_value = "quantrisk.toml")]
    config: PathBuf,
    /// Worker threads (overrides the config).
    #[arg(long, global = true)]
    jobs: Option<usize>,
    /// Master seed (overrides the config).
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory (overrides QUANTRISK_OUTPUT and the config).
    #[arg(long, global = true)]
    output: Option<PathBuf>,
    /// More log output (-v info, -vv debug).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Load and check the data, print a summary.
    Ingest {
        /// Also write the standardized initial window to this CSV.
        #[arg(long)]
        dump_standardized: Option<PathBuf>,
    },
    /// Run a pipeline stage; completed jobs are skipped.
    Run {
        #[arg(long, value_enum, default_value = "full")]
        stage: StageArg,
    },
    /// Render reports from stage artifacts.
    Report {
        #[arg(long, value_enum)]
        kind: ReportKind,
        /// Sort each fan-chart row so quantiles never cross.
        #[arg(long)]
        sort_quantiles: bool,
    },
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum StageArg {
    Validate,
    Test,
    Complexity,
    Full,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum ReportKind {
    Table,
    Fanchart,
    Ledger,
}

fn resolve_config(cli: &Cli) -> Result<ExperimentConfig, CliError> {
    let mut cfg = ExperimentConfig::load(&cli.config)?;
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    if let Some(jobs) = cli.jobs {
        cfg.jobs = Some(jobs);
    }
    if let Some(dir) = &cli.output {
        cfg.output.dir = dir.clone();
    } else if let Some(dir) = std::env::var_os(OUTPUT_ENV).filter(|d| !d.is_empty()) {
        cfg.output.dir = dir.into();
    }
    cfg.validate()?;
    Ok(cfg)
}

#[derive(Serialize)]
struct IngestSummary {
    config_hash: String,
    path: String,
    first_month: String,
    last_month: String,
    months: usize,
    predictors: usize,
    missing: Vec<(String, usize)>,
    target: String,
    horizon: usize,
    observed_targets: usize,
    target_head: Vec<(String, f64)>,
    target_tail: Vec<(String, f64)>,
    validation_forecasts: usize,
    test_forecasts: usize,
}

fn ingest(ctx: &Context, loaded_panel: &quantrisk::dataio::SeriesPanel, dump: Option<&PathBuf>) -> Result<(), CliError> {
    let ds = &ctx.dataset;
    let targets: Vec<(String, f64)> = (0..ds.len())
        .filter_map(|r| ds.target(r).map(|y| (ds.target_date(r).to_string(), y)))
        .collect();
    let count = |seg| ctx.windows.iter().filter(|w| w.segment == seg).count();
    let summary = IngestSummary {
        config_hash: ctx.store.hash().to_string(),
        path: ctx.cfg.data.path.display().to_string(),
        first_month: loaded_panel.first_date().to_string(),
        last_month: loaded_panel.last_date().to_string(),
        months: loaded_panel.len(),
        predictors: ds.num_features(),
        missing: loaded_panel
            .names()
            .iter()
            .cloned()
            .zip(loaded_panel.missing_counts())
            .filter(|(_, c)| *c > 0)
            .collect(),
        target: ctx.cfg.target.variable.clone(),
        horizon: ctx.cfg.target.horizon,
        observed_targets: targets.len(),
        target_head: targets.iter().take(5).cloned().collect(),
        target_tail: targets.iter().rev().take(5).rev().cloned().collect(),
        validation_forecasts: count(Segment::Validation),
        test_forecasts: count(Segment::Test),
    };
    println!("panel      {} ({} .. {}, {} months)", summary.path, summary.first_month, summary.last_month, summary.months);
    println!("predictors {}", summary.predictors);
    println!(
        "missing    {} series with gaps, {} values in total",
        summary.missing.len(),
        summary.missing.iter().map(|(_, c)| c).sum::<usize>()
    );
    for (name, c) in summary.missing.iter().take(10) {
        println!("           {name}: {c}");
    }
    println!("target     {} (h = {}), {} observed", summary.target, summary.horizon, summary.observed_targets);
    for (d, v) in summary.target_head.iter().chain(&summary.target_tail) {
        println!("           {d} {v:.4}");
    }
    println!(
        "split      t1 {} t2 {} t3 {}: {} validation and {} test forecasts",
        ctx.split.t1, ctx.split.t2, ctx.split.t3, summary.validation_forecasts, summary.test_forecasts
    );
    ctx.store.write_json("ingest.json", &summary)?;
    if let Some(path) = dump {
        let scaler = Scaler::fit(ds, ctx.split.t1)?;
        let mut w = csv::Writer::from_writer(Vec::new());
        let mut header = vec!["date".to_string()];
        header.extend(ds.names().iter().cloned());
        header.push("target".into());
        w.write_record(&header).map_err(|e| CliError::Io(e.to_string()))?;
        // every origin the scaler saw, including those whose target lies past t1
        let rows = (ctx.split.t1.months_since(ds.dates()[0]) as usize + 1).min(ds.len());
        for r in 0..rows {
            let mut rec = vec![ds.dates()[r].to_string()];
            rec.extend(scaler.transform_row(ds.feature_row(r)).iter().map(f64::to_string));
            rec.push(ds.target(r).map_or("NA".into(), |y| y.to_string()));
            w.write_record(&rec).map_err(|e| CliError::Io(e.to_string()))?;
        }
        let bytes = w.into_inner().map_err(|e| CliError::Io(e.to_string()))?;
        std::fs::write(path, bytes).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
        println!("wrote standardized window to {}", path.display());
    }
    Ok(())
}

fn run(cli: &Cli) -> Result<(), CliError> {
    let cfg = resolve_config(cli)?;
    let threads = cfg
        .jobs
        .unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get()));
    // only fails if a pool already exists, which is harmless
    let _ = rayon::ThreadPoolBuilder::new().num_threads(threads).build_global();
    let loaded = load(&cfg)?;
    let hash = cfg.hash(&loaded.bytes);
    let store = Store::open(&cfg.output.dir, &hash, cfg.seed)?;
    let ctx = Context::new(cfg, loaded.dataset, store)?;
    info!("config {hash}, {threads} worker threads, output {}", ctx.store.root().display());
    let written = match &cli.command {
        Command::Ingest { dump_standardized } => {
            ingest(&ctx, &loaded.panel, dump_standardized.as_ref())?;
            ctx.store.flush()?;
            return Ok(());
        }
        Command::Run { stage } => {
            match stage {
                StageArg::Complexity => {
                    ctx.complexity()?;
                }
                StageArg::Validate => {
                    ctx.validate()?;
                }
                StageArg::Test => ctx.test()?,
                StageArg::Full => ctx.test()?,
            }
            ctx.store.flush()?;
            let failures = ctx.failures();
            if !failures.is_empty() {
                let list: Vec<String> = failures.iter().map(|(id, e)| format!("{id} ({e})")).collect();
                return Err(CliError::Job(format!("{} job(s) failed: {}", list.len(), list.join("; "))));
            }
            if matches!(stage, StageArg::Full) {
                let mut w = ctx.report_table()?;
                w.extend(ctx.report_fanchart(false)?);
                w.extend(ctx.report_ledger()?);
                w
            } else {
                Vec::new()
            }
        }
        Command::Report { kind, sort_quantiles } => match kind {
            ReportKind::Table => ctx.report_table()?,
            ReportKind::Fanchart => ctx.report_fanchart(*sort_quantiles)?,
            ReportKind::Ledger => ctx.report_ledger()?,
        },
    };
    for rel in written {
        println!("{}", ctx.store.path(&rel).display());
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("quantrisk: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
