//! Subcommand implementations behind the `rks` binary.

use std::fmt;
use std::net::SocketAddr;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};

use rks_core::config::{BatchTemplate, TrialConfig};
use rks_core::metrics::{aggregate, BatchAggregate};
use rks_core::record::{read_log, write_log};
use rks_core::runner::{run_batch, run_trial};
use rks_core::Error;

#[derive(Debug, Parser)]
#[command(name = "rks", version, about = "Tri-agent recursive validation trials")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run one trial from a configuration file.
    Run {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Run a batch of trials from a template.
    Batch {
        #[arg(long)]
        template: PathBuf,
        #[arg(long, default_value_t = 47)]
        count: usize,
        #[arg(long)]
        master_seed: u64,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 1)]
        parallel: usize,
    },
    /// Aggregate a trial log.
    Analyze(AnalyzeArgs),
    /// Serve supervised sessions over HTTP.
    Serve {
        #[arg(long, default_value_t = 8080)]
        port: u16,
        #[arg(long)]
        log_dir: Option<PathBuf>,
        #[arg(long, default_value = "127.0.0.1")]
        host: std::net::IpAddr,
    },
}

#[derive(Debug, Args)]
pub struct AnalyzeArgs {
    #[arg(long)]
    pub log: PathBuf,
    #[arg(long, conflicts_with = "table")]
    pub json: bool,
    #[arg(long)]
    pub table: bool,
}

/// Failure classes mapped to process exit codes.
#[derive(Debug)]
pub enum CliError {
    Config(String),
    Runtime(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 1,
            CliError::Runtime(_) => 2,
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Config(m) => write!(f, "configuration error: {m}"),
            CliError::Runtime(m) => write!(f, "error: {m}"),
        }
    }
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        match e {
            Error::ConfigInvalid(_) | Error::InvalidSpec(_) | Error::DimensionMismatch { .. } => {
                CliError::Config(e.to_string())
            }
            other => CliError::Runtime(other.to_string()),
        }
    }
}

impl From<rks_bridge::BridgeError> for CliError {
    fn from(e: rks_bridge::BridgeError) -> Self {
        match e {
            rks_bridge::BridgeError::ConfigInvalid(m) => CliError::Config(m),
            other => CliError::Runtime(other.to_string()),
        }
    }
}

pub fn execute(cli: Cli) -> Result<String, CliError> {
    match cli.command {
        Command::Run { config, out } => run(&config, &out),
        Command::Batch {
            template,
            count,
            master_seed,
            out,
            parallel,
        } => batch(&template, count, master_seed, &out, parallel),
        Command::Analyze(args) => analyze(&args),
        Command::Serve { port, log_dir, host } => serve(SocketAddr::new(host, port), log_dir),
    }
}

fn run(config: &Path, out: &Path) -> Result<String, CliError> {
    let config = TrialConfig::load(config)?;
    let record = run_trial(&config)?;
    write_log(std::slice::from_ref(&record), out)?;
    let conv = record.convergence.as_ref();
    let mut s = format!(
        "status {:?}, {} cycles, converged {}",
        record.status,
        record.cycles.len(),
        conv.is_some_and(|c| c.converged)
    );
    if let Some(m) = &record.metrics {
        s.push_str(&format!(", TS {:.3}", m.ts));
        if let Some(rrs) = m.rrs {
            s.push_str(&format!(", RRS {rrs:.3}"));
        }
    }
    if let Some(e) = &record.error {
        s.push_str(&format!(" ({e})"));
    }
    Ok(s)
}

fn batch(template: &Path, count: usize, master_seed: u64, out: &Path, parallel: usize) -> Result<String, CliError> {
    let template = BatchTemplate::load(template)?;
    let outcome = run_batch(&template, count, master_seed, parallel.max(1))?;
    write_log(&outcome.records, out)?;
    Ok(match outcome.aggregate {
        Some(agg) => agg.to_table(),
        None => format!("no valid trials among {}", outcome.records.len()),
    })
}

/// Aggregate of a log file.
pub fn analyze_log(path: &Path) -> Result<BatchAggregate, CliError> {
    let records = read_log(path)?;
    Ok(aggregate(&records)?)
}

fn analyze(args: &AnalyzeArgs) -> Result<String, CliError> {
    let agg = analyze_log(&args.log)?;
    if args.json {
        serde_json::to_string_pretty(&agg).map_err(|e| CliError::Runtime(e.to_string()))
    } else {
        Ok(agg.to_table())
    }
}

fn serve(addr: SocketAddr, log_dir: Option<PathBuf>) -> Result<String, CliError> {
    let runtime = tokio::runtime::Runtime::new().map_err(|e| CliError::Runtime(e.to_string()))?;
    eprintln!("listening on http://{addr}");
    runtime.block_on(rks_bridge::service::serve(addr, log_dir))?;
    Ok(String::new())
}
