//! Command-line front end: resolves parameters, runs one experiment and
//! writes `<experiment>.csv` plus `<experiment>.manifest.json`.

pub mod config;
pub mod experiments;
pub mod output;

use std::path::PathBuf;

use clap::Parser;
use thiserror::Error;

use config::ParamOverrides;
use experiments::Experiment;
use output::ManifestInput;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("solver error: {0}")]
    Solver(String),
    #[error("I/O error: {0}")]
    Io(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            CliError::Solver(_) => 3,
            CliError::Io(_) => 4,
        }
    }
}

#[derive(Debug, Parser)]
#[command(
    name = "sideband-friction",
    version,
    about = "Two-mode nonlinear friction experiments"
)]
pub struct Cli {
    /// TOML configuration file
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Output directory
    #[arg(long, global = true, env = "SIDEBAND_FRICTION_OUT", default_value = "out")]
    pub out: PathBuf,
    /// Named parameter preset
    #[arg(long, global = true)]
    pub preset: Option<String>,
    /// Omit the generation time from the manifest
    #[arg(long, global = true)]
    pub no_timestamp: bool,
    /// Worker threads (default: all cores)
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    #[command(flatten)]
    pub params: ParamOverrides,
    #[command(subcommand)]
    pub experiment: Experiment,
}

/// Runs a parsed command line and returns the paths written.
pub fn execute(cli: Cli) -> Result<Vec<PathBuf>, CliError> {
    if let Some(n) = cli.threads {
        if n == 0 {
            return Err(CliError::Config("threads: must be at least 1".into()));
        }
        // Fails only when a pool already exists, which is harmless here.
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    }
    let table = cli.config.as_deref().map(config::load).transpose()?;
    if let Some(t) = &table {
        config::check_top_level(t, experiments::NAMES)?;
    }
    let sys = config::resolve_system(cli.preset.as_deref(), table.as_ref(), &cli.params)?;
    let name = cli.experiment.name();
    let exp_table = match table.as_ref().and_then(|t| t.get(name)) {
        Some(v) => Some(serde_json::to_value(v).map_err(|e| CliError::Config(format!("{name}: {e}")))?),
        None => None,
    };
    let report = experiments::run(cli.experiment, &sys, exp_table.as_ref())?;

    let timestamp = if cli.no_timestamp {
        None
    } else {
        std::time::SystemTime::now()
            .duration_since(std::time::UNIX_EPOCH)
            .ok()
            .map(|d| d.as_secs())
    };
    let manifest_name = format!("{name}.manifest.json");
    let mut files = report.files;
    let mut listed: Vec<String> = files.iter().map(|(n, _)| n.clone()).collect();
    listed.push(manifest_name.clone());
    let manifest = output::manifest(ManifestInput {
        experiment: name,
        sys: &sys,
        options: report.options,
        results: report.results,
        files: listed,
        timestamp,
    });
    files.push((manifest_name, manifest));
    output::write_all(&cli.out, &files)
}

/// Parses the process arguments, runs, and returns the exit code.
pub fn run() -> i32 {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    match execute(cli) {
        Ok(paths) => {
            for p in paths {
                println!("{}", p.display());
            }
            0
        }
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}
