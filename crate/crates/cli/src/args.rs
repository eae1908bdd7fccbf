use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};

use camr_core::AggregatorKind;

/// Worker-count override for the parallel map/shuffle phases.
pub const WORKERS_ENV: &str = "CAMR_WORKERS";

#[derive(Debug, Parser)]
#[command(name = "camr", version, about = "Coded aggregated MapReduce simulator")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Build the resolvable design and print blocks, classes and owner sets.
    Design(DesignArgs),
    /// Run the full pipeline for one parameter point.
    Simulate(SimulateArgs),
    /// Run the pipeline over a grid of parameter points.
    Sweep(SweepArgs),
    /// Compare job counts and loads with the compressed coded scheme for a cluster size.
    Compare(CompareArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Text,
    Json,
    Csv,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum AggregatorArg {
    Sum,
    Max,
}

impl From<AggregatorArg> for AggregatorKind {
    fn from(a: AggregatorArg) -> Self {
        match a {
            AggregatorArg::Sum => AggregatorKind::Sum,
            AggregatorArg::Max => AggregatorKind::Max,
        }
    }
}

#[derive(Debug, Args)]
pub struct DesignArgs {
    #[arg(long)]
    pub q: usize,
    #[arg(long)]
    pub k: usize,
    #[arg(long, value_enum, default_value = "text")]
    pub format: Format,
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    #[arg(long)]
    pub q: usize,
    #[arg(long)]
    pub k: usize,
    /// Batch size; each job has N = k*gamma subfiles.
    #[arg(long, default_value_t = 2)]
    pub gamma: usize,
    /// Bytes per intermediate value. Defaults to 8 rounded up to a multiple of k-1.
    #[arg(long)]
    pub value_bytes: Option<usize>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, value_enum, default_value = "sum")]
    pub aggregator: AggregatorArg,
    #[arg(long, value_enum, default_value = "text")]
    pub format: Format,
    /// Write the design as JSON.
    #[arg(long, value_name = "PATH")]
    pub dump_design: Option<PathBuf>,
    /// Write the placement plan as JSON.
    #[arg(long, value_name = "PATH")]
    pub dump_placement: Option<PathBuf>,
    /// Write the transmission log as JSON lines.
    #[arg(long, value_name = "PATH")]
    pub dump_log: Option<PathBuf>,
    /// Write per-subfile corpus records as JSON lines.
    #[arg(long, value_name = "PATH")]
    pub dump_corpus: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct SweepArgs {
    #[arg(long, value_delimiter = ',', default_values_t = [2, 3, 4, 5])]
    pub q: Vec<usize>,
    #[arg(long, value_delimiter = ',', default_values_t = [2, 3, 4])]
    pub k: Vec<usize>,
    #[arg(long, value_delimiter = ',', default_values_t = [1, 2, 3])]
    pub gamma: Vec<usize>,
    /// Every point is simulated once per seed; `correct` requires all to pass.
    #[arg(long, value_delimiter = ',', default_values_t = [0])]
    pub seeds: Vec<u64>,
    #[arg(long)]
    pub value_bytes: Option<usize>,
    #[arg(long, value_enum, default_value = "sum")]
    pub aggregator: AggregatorArg,
    #[arg(long, value_enum, default_value = "csv")]
    pub format: Format,
}

#[derive(Debug, Args)]
pub struct CompareArgs {
    /// Cluster size K.
    #[arg(long = "K", id = "servers")]
    pub servers: usize,
    /// Restrict to these code lengths; defaults to every divisor of K with q >= 2.
    #[arg(long, value_delimiter = ',')]
    pub k: Vec<usize>,
    #[arg(long, value_enum, default_value = "text")]
    pub format: Format,
}
