use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

#[derive(Debug, Parser)]
#[command(
    name = "commgen",
    version,
    about = "Community genealogy graphs from posting histories"
)]
pub struct Cli {
    /// Worker threads; defaults to one per core.
    #[arg(long, global = true)]
    pub workers: Option<usize>,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Parse an event log and write the corpus index.
    Ingest(IngestArgs),
    /// Parent edges and statistics of every eligible child at one k.
    Genealogy(GenealogyArgs),
    /// Per-k means of parent properties.
    Emergence(EmergenceArgs),
    /// Parent properties bucketed by child creation time.
    Timeseries(TimeseriesArgs),
    /// Growth features, labels and rate targets.
    GrowthDataset(GrowthDatasetArgs),
    /// Repeated-split evaluation of the growth dataset.
    GrowthEval(EvalArgs),
    /// Matched early-member pairs with behaviour features.
    EarlyDataset(EarlyDatasetArgs),
    /// Repeated-split evaluation of the early-member dataset.
    EarlyEval(EvalArgs),
    /// Generate a synthetic corpus with planted genealogy.
    Synth(SynthArgs),
    /// Write plot-ready tables from finished stages.
    Export(ExportArgs),
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct Common {
    /// Directory for stage artifacts.
    #[arg(long, default_value = "commgen-out")]
    pub out_dir: PathBuf,

    /// Corpus index; defaults to `<out-dir>/index.bin`.
    #[arg(long)]
    pub index: Option<PathBuf>,
}

impl Common {
    pub fn index_path(&self) -> PathBuf {
        self.index
            .clone()
            .unwrap_or_else(|| self.out_dir.join("index.bin"))
    }
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct Window {
    #[arg(long, default_value_t = 30)]
    pub window_days: u32,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct IngestArgs {
    #[command(flatten)]
    pub common: Common,

    /// Newline-delimited event log.
    #[arg(long)]
    pub input: PathBuf,

    /// Reuse and populate an index cache keyed by input hash.
    #[arg(long, env = "COMMGEN_CACHE_DIR")]
    pub cache_dir: Option<PathBuf>,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct Children {
    /// Children need strictly more members than this.
    #[arg(long, default_value_t = 100)]
    pub min_members: usize,

    /// Only children created after this epoch second.
    #[arg(long, default_value_t = commgen::ingest::DEFAULT_CREATED_AFTER)]
    pub created_after: i64,

    /// Only children created at or before this epoch second; defaults to
    /// ninety days before the last event.
    #[arg(long)]
    pub created_until: Option<i64>,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct GenealogyArgs {
    #[command(flatten)]
    pub common: Common,
    #[command(flatten)]
    pub window: Window,
    #[command(flatten)]
    pub children: Children,

    #[arg(long, default_value_t = 10)]
    pub k: usize,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct EmergenceArgs {
    #[command(flatten)]
    pub common: Common,
    #[command(flatten)]
    pub window: Window,
    #[command(flatten)]
    pub children: Children,

    /// Comma-separated early-member counts.
    #[arg(long, value_delimiter = ',', default_value = "10,20,30,40,50,60,70,80,90,100")]
    pub k: Vec<usize>,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct TimeseriesArgs {
    #[command(flatten)]
    pub common: Common,
    #[command(flatten)]
    pub window: Window,
    #[command(flatten)]
    pub children: Children,

    #[arg(long, value_delimiter = ',', default_value = "10")]
    pub k: Vec<usize>,

    #[arg(long, default_value_t = 30)]
    pub bucket_days: u32,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct GrowthDatasetArgs {
    #[command(flatten)]
    pub common: Common,
    #[command(flatten)]
    pub window: Window,
    #[command(flatten)]
    pub children: Children,

    #[arg(long, default_value_t = 10)]
    pub k: usize,

    /// Parents need this many distinct posters for a language model.
    #[arg(long, default_value_t = commgen::lang::DEFAULT_MIN_UNIQUE_MEMBERS)]
    pub lm_min_posters: usize,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct EvalArgs {
    #[command(flatten)]
    pub common: Common,

    #[arg(long, default_value_t = 30)]
    pub repeats: usize,

    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct EarlyDatasetArgs {
    #[command(flatten)]
    pub common: Common,

    /// Early members per child; at most the k of the genealogy stage.
    #[arg(long, default_value_t = 10)]
    pub k: usize,

    /// Parent-child edges to sample.
    #[arg(long, default_value_t = 1000)]
    pub tuples: usize,

    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Scenario {
    Growth,
    Early,
    Random,
    TwoEra,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct SynthArgs {
    #[arg(long, default_value = "commgen-out")]
    pub out_dir: PathBuf,

    #[arg(long, value_enum, default_value_t = Scenario::Growth)]
    pub scenario: Scenario,

    #[arg(long, default_value_t = 0)]
    pub seed: u64,

    /// Number of child communities to plant.
    #[arg(long, default_value_t = 100)]
    pub children: usize,

    /// Early members with planted histories.
    #[arg(long, default_value_t = 10)]
    pub k: usize,

    /// Size floor of growth-scenario children.
    #[arg(long, default_value_t = 100)]
    pub min_members: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Table {
    Edges,
    ParentStats,
    Emergence,
    Timeseries,
    Growth,
    Early,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct ExportArgs {
    #[arg(long, default_value = "commgen-out")]
    pub out_dir: PathBuf,

    /// Edges must weigh more than this to be written.
    #[arg(long, default_value_t = commgen::report::DEFAULT_EDGE_FILTER)]
    pub edge_filter: f64,

    /// Tables to write; every finished stage when omitted.
    #[arg(long, value_enum, value_delimiter = ',')]
    pub only: Vec<Table>,
}
