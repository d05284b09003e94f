//! Command-line front end: ingestion, entropy estimates, grouping bounds and
//! key-rank experiments written as plot-ready report files.

pub mod commands;
pub mod config;
mod error;
pub mod report;

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use puf_entropy::dataset::{Delimiter, MeasurementReduction, Orientation};
use puf_entropy::grouping::RepresentativeMode;
use puf_entropy::keyrank::RankStrategy;

pub use config::AnalysisConfig;
pub use error::{CliError, CliResult};

/// Environment variable capping the number of worker threads.
pub const THREADS_ENV: &str = "PUF_ENTROPY_THREADS";

#[derive(Debug, Parser)]
#[command(name = "puf-entropy", version, about = "Min-entropy and key-rank analysis of PUF responses")]
pub struct Cli {
    #[command(flatten)]
    pub global: GlobalArgs,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args)]
pub struct GlobalArgs {
    /// TOML analysis configuration.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Ring-oscillator frequency file.
    #[arg(long, global = true)]
    pub dataset: Option<PathBuf>,
    #[arg(long, global = true, conflicts_with = "devices_in_cols")]
    pub devices_in_rows: bool,
    #[arg(long, global = true)]
    pub devices_in_cols: bool,
    #[arg(long, global = true, value_enum)]
    pub delimiter: Option<DelimiterArg>,
    /// Skip the first non-comment line of the dataset.
    #[arg(long, global = true)]
    pub header: bool,
    /// Consecutive records per device.
    #[arg(long, global = true)]
    pub measurements: Option<usize>,
    /// Reduce repeated measurements by per-bit majority vote.
    #[arg(long, global = true)]
    pub majority_vote: bool,
    /// Device subset such as `0-191`.
    #[arg(long, global = true)]
    pub devices: Option<String>,
    /// Output directory.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    #[arg(long, global = true, value_enum)]
    pub mode: Option<ModeArg>,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum DelimiterArg {
    Whitespace,
    Comma,
    Any,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum ModeArg {
    Highest,
    Lowest,
    Mean,
    Median,
}

#[derive(Debug, Clone, Copy, Default, ValueEnum)]
pub enum MethodArg {
    #[default]
    Auto,
    Exact,
    Histogram,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Bit-Alias vector and heat-map grid.
    Bitalias {
        /// Positions per heat-map line.
        #[arg(long, default_value_t = 16)]
        width: usize,
    },
    /// Entropy table over all configured codes.
    Table {
        #[arg(long, value_delimiter = ',')]
        codes: Option<Vec<String>>,
        #[arg(long, value_delimiter = ',')]
        theta_delta: Option<Vec<f64>>,
        #[arg(long)]
        hash_loss: Option<f64>,
        /// Skip the exact columns.
        #[arg(long)]
        no_exact: bool,
    },
    /// Baseline and exact estimates for one code.
    Entropy {
        #[arg(long)]
        code: String,
        #[arg(long)]
        hash_loss: Option<f64>,
        /// Fail when the exact value cannot be computed.
        #[arg(long)]
        require_exact: bool,
    },
    /// Grouping bound for one code.
    Grouping {
        #[arg(long)]
        code: String,
        #[arg(long, default_value_t = 0.05)]
        theta_delta: f64,
        /// Write the sorted response-group prefix of every block as CSV.
        #[arg(long)]
        emit_table: Option<PathBuf>,
        #[arg(long, default_value_t = 1 << 20)]
        max_table_rows: usize,
    },
    /// Key rank of every device for random enrolled keys.
    Keyrank {
        #[arg(long)]
        code: String,
        #[arg(long)]
        keys: Option<usize>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        bins: Option<usize>,
        #[arg(long, value_enum, default_value_t)]
        method: MethodArg,
    },
    /// Bit-Alias, table and key-rank reports for the whole configuration.
    Run {
        #[arg(long, default_value_t = 16)]
        width: usize,
    },
}

/// Merges the configuration file with command-line overrides.
pub fn resolve_config(cli: &Cli) -> CliResult<AnalysisConfig> {
    let g = &cli.global;
    let mut cfg = match &g.config {
        Some(path) => AnalysisConfig::load(path)?,
        None => AnalysisConfig::default(),
    };
    if let Some(p) = &g.dataset {
        cfg.dataset.path = Some(p.clone());
    }
    if g.devices_in_rows {
        cfg.dataset.orientation = Orientation::DevicesInRows;
    }
    if g.devices_in_cols {
        cfg.dataset.orientation = Orientation::DevicesInCols;
    }
    if let Some(d) = g.delimiter {
        cfg.dataset.delimiter = match d {
            DelimiterArg::Whitespace => Delimiter::Whitespace,
            DelimiterArg::Comma => Delimiter::Comma,
            DelimiterArg::Any => Delimiter::Any,
        };
    }
    if g.header {
        cfg.dataset.header = true;
    }
    if let Some(m) = g.measurements {
        cfg.dataset.measurements_per_device = m;
    }
    if g.majority_vote {
        cfg.dataset.reduction = MeasurementReduction::MajorityVote;
    }
    if let Some(list) = &g.devices {
        cfg.dataset.devices = Some(config::parse_device_list(list)?);
    }
    if let Some(out) = &g.out {
        cfg.output_dir = out.clone();
    }
    if let Some(m) = g.mode {
        cfg.mode = match m {
            ModeArg::Highest => RepresentativeMode::Highest,
            ModeArg::Lowest => RepresentativeMode::Lowest,
            ModeArg::Mean => RepresentativeMode::Mean,
            ModeArg::Median => RepresentativeMode::Median,
        };
    }
    match &cli.command {
        Command::Table {
            codes,
            theta_delta,
            hash_loss,
            no_exact,
        } => {
            if let Some(c) = codes {
                cfg.codes = c.clone();
            }
            if let Some(t) = theta_delta {
                cfg.theta_delta = t.clone();
            }
            if let Some(l) = hash_loss {
                cfg.hash_loss = *l;
            }
            if *no_exact {
                cfg.exact = false;
            }
        }
        Command::Entropy { hash_loss: Some(l), .. } => cfg.hash_loss = *l,
        Command::Keyrank { keys, seed, bins, .. } => {
            if let Some(k) = keys {
                cfg.keys = *k;
            }
            if let Some(s) = seed {
                cfg.seed = *s;
            }
            if let Some(b) = bins {
                cfg.bins = *b;
            }
        }
        _ => {}
    }
    cfg.validate()?;
    Ok(cfg)
}

/// Applies the worker cap from the environment, if set.
pub fn configure_threads() -> CliResult<()> {
    let Ok(value) = std::env::var(THREADS_ENV) else {
        return Ok(());
    };
    let n: usize = value
        .trim()
        .parse()
        .ok()
        .filter(|&n| n > 0)
        .ok_or_else(|| CliError::Config(format!("{THREADS_ENV}={value:?} is not a positive integer")))?;
    // a pool may already exist when called twice in one process
    let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    Ok(())
}

/// Runs a parsed command line and returns the files written.
pub fn run(cli: &Cli) -> CliResult<Vec<PathBuf>> {
    configure_threads()?;
    let cfg = resolve_config(cli)?;
    match &cli.command {
        Command::Bitalias { width } => commands::cmd_bitalias(&cfg, *width),
        Command::Table { .. } => commands::cmd_table(&cfg),
        Command::Entropy { code, require_exact, .. } => commands::cmd_entropy(&cfg, code, *require_exact),
        Command::Grouping {
            code,
            theta_delta,
            emit_table,
            max_table_rows,
        } => commands::cmd_grouping(&cfg, code, *theta_delta, emit_table.as_deref(), *max_table_rows),
        Command::Keyrank { code, method, .. } => {
            let strategy = match method {
                MethodArg::Auto => RankStrategy::Auto,
                MethodArg::Exact => RankStrategy::Exact,
                MethodArg::Histogram => RankStrategy::Histogram,
            };
            commands::cmd_keyrank(&cfg, code, strategy)
        }
        Command::Run { width } => commands::cmd_run(&cfg, *width),
    }
}
