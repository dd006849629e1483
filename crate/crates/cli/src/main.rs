mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use uevt_core::Error;

use crate::config::RunConfig;

#[derive(Parser, Debug)]
#[command(
    name = "uevt",
    version,
    about = "EVT Value-at-Risk with a forecast tail threshold"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,

    /// Flat `key = value` config file; flags override its values.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// VaR confidence level.
    #[arg(long, global = true)]
    p: Option<f64>,
    /// Realized-threshold target: forward, forward-<h> or nextday.
    #[arg(long, global = true)]
    target: Option<String>,
    /// Comma-separated model names.
    #[arg(long, global = true)]
    models: Option<String>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Daily CSV with header `date,close`.
    #[arg(long, global = true)]
    daily: Option<PathBuf>,
    /// Intraday CSV with header `date,time,price` or `date,time,return`.
    #[arg(long, global = true)]
    intraday: Option<PathBuf>,
    /// What the intraday file's third column holds: price or return.
    #[arg(long, global = true)]
    intraday_kind: Option<String>,
    /// log or simple.
    #[arg(long, global = true)]
    return_kind: Option<String>,
}

#[derive(Subcommand, Debug, Clone, Copy)]
enum Command {
    /// Validate inputs and write daily returns.
    Ingest,
    /// Realized break-even thresholds.
    Brt,
    /// Monthly ambiguity from intraday data.
    Ambiguity,
    /// Rolling VaR forecasts from the predicted threshold.
    Forecast,
    /// Benchmark VaR models.
    Bench,
    /// Coverage tests and the pairwise comparison matrix.
    Backtest,
    /// Backtest plus a plain-text summary.
    Report,
}

impl Command {
    fn name(self) -> &'static str {
        match self {
            Command::Ingest => "ingest",
            Command::Brt => "brt",
            Command::Ambiguity => "ambiguity",
            Command::Forecast => "forecast",
            Command::Bench => "bench",
            Command::Backtest => "backtest",
            Command::Report => "report",
        }
    }
}

fn build_config(cli: &Cli) -> uevt_core::Result<RunConfig> {
    let mut cfg = match &cli.config {
        Some(path) => RunConfig::load(path)?,
        None => RunConfig::default(),
    };
    let cwd = PathBuf::from(".");
    let flags = [
        ("p", cli.p.map(|v| v.to_string())),
        ("target", cli.target.clone()),
        ("models", cli.models.clone()),
        ("seed", cli.seed.map(|v| v.to_string())),
        ("out", cli.out.as_ref().map(|p| p.display().to_string())),
        ("daily", cli.daily.as_ref().map(|p| p.display().to_string())),
        (
            "intraday",
            cli.intraday.as_ref().map(|p| p.display().to_string()),
        ),
        ("intraday_kind", cli.intraday_kind.clone()),
        ("return_kind", cli.return_kind.clone()),
    ];
    for (key, value) in flags {
        if let Some(v) = value {
            cfg.set(key, &v, &cwd)?;
        }
    }
    cfg.validate()?;
    Ok(cfg)
}

fn error_kind(e: &Error) -> &'static str {
    match e {
        Error::InvalidInput(_) => "invalid_input",
        Error::Parse { .. } => "parse",
        Error::Data(_) => "data",
        Error::InsufficientData { .. } => "insufficient_data",
        Error::TooFewExceedances { .. } => "too_few_exceedances",
        Error::NonConvergence { .. } => "non_convergence",
        Error::RankDeficient { .. } => "rank_deficient",
        Error::Misaligned(_) => "misaligned",
        Error::Io(_) => "io",
        Error::Csv(_) => "csv",
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let result = build_config(&cli).and_then(|cfg| commands::run(cli.command.name(), &cfg));
    match result {
        Ok(summary) => {
            println!("{summary}");
            ExitCode::SUCCESS
        }
        Err(e) => {
            let mut report = serde_json::json!({
                "status": "error",
                "command": cli.command.name(),
                "kind": error_kind(&e),
                "message": e.to_string(),
            });
            if let Error::Parse { line, .. } = &e {
                report["line"] = serde_json::json!(line);
            }
            eprintln!("{report}");
            ExitCode::FAILURE
        }
    }
}
