//! `mgp` — reference tables, diagnostics, and a simulation study for the
//! cumulative-product column-variance prior.

use clap::{Parser, Subcommand};

mod diagnose;
mod output;
mod probe;
mod study;
mod table;

#[derive(thiserror::Error, Debug)]
pub enum CliError {
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error(transparent)]
    Core(#[from] mgp_core::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error("invalid configuration: {0}")]
    Config(String),
}

#[derive(Parser)]
#[command(
    name = "mgp",
    version,
    about = "Quartile tables, shrinkage bounds, and a factor-model study for a cumulative-product variance prior"
)]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Prior quartiles of column precisions, variances, and loadings
    Table1(table::Table1Args),
    /// Per-transition shrinkage bounds and their intersection
    Table2(table::Table2Args),
    /// Full diagnostic for one hyperparameter choice
    Diagnose(diagnose::DiagnoseArgs),
    /// Factor-model comparison across prior settings on shared data
    Simstudy(study::StudyArgs),
    /// Monte Carlo frequency of a variance-path box event
    SupportProbe(probe::ProbeArgs),
    /// Near-zero density-ratio traces for one column transition
    DensityCheck(probe::DensityArgs),
}

/// Worker-pool size comes from MGP_WORKERS alone; results do not depend on
/// it, only wall-clock time does.
fn init_workers() -> Result<(), CliError> {
    let Ok(raw) = std::env::var("MGP_WORKERS") else {
        return Ok(());
    };
    let n: usize = raw
        .parse()
        .ok()
        .filter(|&n| n >= 1)
        .ok_or_else(|| CliError::Config(format!("MGP_WORKERS must be a positive integer, got {raw:?}")))?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| CliError::Config(format!("worker pool: {e}")))
}

fn run(cli: &Cli) -> Result<(), CliError> {
    init_workers()?;
    match &cli.cmd {
        Cmd::Table1(a) => table::table1(a),
        Cmd::Table2(a) => table::table2(a),
        Cmd::Diagnose(a) => diagnose::diagnose(a),
        Cmd::Simstudy(a) => study::simstudy(a),
        Cmd::SupportProbe(a) => probe::support_probe(a),
        Cmd::DensityCheck(a) => probe::density_check(a),
    }
}

fn main() {
    let cli = Cli::parse();
    if let Err(e) = run(&cli) {
        eprintln!("error: {e}");
        std::process::exit(1);
    }
}
