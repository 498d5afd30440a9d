//! `qvfuse`: query-variation fusion and residual-aware evaluation pipelines.

mod commands;
mod io;

use std::path::PathBuf;
use std::process::ExitCode;

use chrono::NaiveDate;
use clap::{Args, Parser, Subcommand, ValueEnum};

const LONG_VERSION: &str = concat!(
    env!("CARGO_PKG_VERSION"),
    "\nrun format: TREC 6-column\nqrels format: TREC 4-column\nindex format: 1"
);

#[derive(Debug, Parser)]
#[command(name = "qvfuse", version, long_version = LONG_VERSION)]
#[command(
    about = "Double fusion of query variations, freshness re-ranking, and RBP residual analysis"
)]
pub struct Cli {
    /// Worker threads (default: available cores).
    #[arg(long, global = true, env = "QVFUSE_THREADS")]
    threads: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Build an inverted index from a metadata CSV or a `doc_id<TAB>text` corpus.
    Index(IndexArgs),
    /// Run every query variation through every model, one run file per (model, variation).
    Search(SearchArgs),
    /// CombSUM-fuse min-max normalized rankings into one run.
    Fuse(FuseArgs),
    /// Re-rank a run by normalized relevance plus freshness.
    Rerank(RerankArgs),
    /// Evaluate a run with RBP (plus residual) or precision@k.
    Eval(EvalArgs),
    /// Build a depth-k judgment pool from a directory of runs.
    Pool(PoolArgs),
    /// System-level analyses across a directory of runs.
    #[command(subcommand)]
    Analyze(AnalyzeCommand),
}

#[derive(Debug, Args)]
pub struct MetadataColumnArgs {
    #[arg(long, default_value = "cord_uid")]
    pub id_column: String,
    #[arg(long, default_value = "title")]
    pub title_column: String,
    #[arg(long, default_value = "abstract")]
    pub abstract_column: String,
    #[arg(long, default_value = "publish_time")]
    pub date_column: String,
    /// Optional full-text column.
    #[arg(long)]
    pub body_column: Option<String>,
}

#[derive(Debug, Args)]
pub struct IndexArgs {
    /// Metadata CSV with a header row.
    #[arg(long, conflicts_with = "corpus", required_unless_present = "corpus")]
    pub metadata: Option<PathBuf>,
    /// Newline-delimited `doc_id<TAB>text` records.
    #[arg(long)]
    pub corpus: Option<PathBuf>,
    /// Corpus snapshot date.
    #[arg(long, default_value = "2020-04-10")]
    pub snapshot_date: NaiveDate,
    #[command(flatten)]
    pub columns: MetadataColumnArgs,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct ModelArgs {
    /// Comma-separated scoring models: bm25, tf_idf, hiemstra_lm, dph.
    #[arg(
        long,
        value_delimiter = ',',
        default_value = "bm25,tf_idf,hiemstra_lm,dph"
    )]
    pub models: Vec<String>,
    #[arg(long, default_value_t = 1.2)]
    pub bm25_k1: f64,
    #[arg(long, default_value_t = 0.75)]
    pub bm25_b: f64,
    #[arg(long, default_value_t = 0.15)]
    pub lm_lambda: f64,
}

#[derive(Debug, Args)]
pub struct SearchArgs {
    #[arg(long)]
    pub index: PathBuf,
    /// `topic<TAB>variation<TAB>query` file.
    #[arg(long)]
    pub topics: PathBuf,
    #[command(flatten)]
    pub models: ModelArgs,
    #[arg(long, default_value_t = 1000)]
    pub depth: usize,
    /// Output directory for `<model>.<variation>.run` files.
    #[arg(long)]
    pub out_dir: PathBuf,
}

#[derive(Debug, Args)]
pub struct FuseArgs {
    /// Directory of source run files.
    #[arg(long, conflicts_with_all = ["index", "topics"], required_unless_present = "index")]
    pub runs: Option<PathBuf>,
    /// Index for in-process double fusion (with --topics).
    #[arg(long, requires = "topics")]
    pub index: Option<PathBuf>,
    #[arg(long, requires = "index")]
    pub topics: Option<PathBuf>,
    #[command(flatten)]
    pub models: ModelArgs,
    /// Output depth.
    #[arg(long, default_value_t = 1000)]
    pub depth: usize,
    /// Depth of each source ranking.
    #[arg(long, default_value_t = 1000)]
    pub source_depth: usize,
    #[arg(long, default_value = "fused")]
    pub tag: String,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct RerankArgs {
    #[arg(long)]
    pub run: PathBuf,
    #[arg(long)]
    pub metadata: PathBuf,
    /// Reference date for days-since-publication.
    #[arg(long)]
    pub ref_date: NaiveDate,
    #[command(flatten)]
    pub columns: MetadataColumnArgs,
    /// Tag for the output run (default: input tag).
    #[arg(long)]
    pub tag: Option<String>,
    #[arg(long, default_value_t = 1000)]
    pub depth: usize,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Measure {
    Rbp,
    P,
}

#[derive(Debug, Args)]
pub struct MeasureArgs {
    #[arg(long, value_enum, default_value = "rbp")]
    pub measure: Measure,
    #[arg(long, default_value_t = 0.5)]
    pub phi: f64,
    /// Cutoff for precision.
    #[arg(long, default_value_t = 5)]
    pub k: usize,
    /// Minimum grade counted as relevant.
    #[arg(long, default_value_t = 1)]
    pub threshold: u32,
    #[arg(long, default_value_t = 1000)]
    pub depth: usize,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[arg(long)]
    pub qrels: PathBuf,
    #[arg(long)]
    pub run: PathBuf,
    #[command(flatten)]
    pub measure: MeasureArgs,
    /// Emit one row per topic before the mean row.
    #[arg(long)]
    pub per_topic: bool,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct PoolArgs {
    #[arg(long)]
    pub depth: usize,
    #[arg(long)]
    pub runs: PathBuf,
    /// Remove documents judged here before pooling (residual collection).
    #[arg(long)]
    pub exclude_qrels: Option<PathBuf>,
    #[arg(long, default_value_t = 1000)]
    pub max_depth: usize,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Subset {
    All,
    Pooled,
    Unpooled,
}

#[derive(Debug, Subcommand)]
pub enum AnalyzeCommand {
    /// Rank shifts between two judgment sets, with IQR outliers.
    RankShift(RankShiftArgs),
    /// Plot data: per-system or per-topic score and score + residual.
    Curves(CurvesArgs),
}

#[derive(Debug, Args)]
pub struct RankShiftArgs {
    #[arg(long)]
    pub runs: PathBuf,
    #[arg(long)]
    pub qrels_a: PathBuf,
    #[arg(long)]
    pub qrels_b: PathBuf,
    #[command(flatten)]
    pub measure: MeasureArgs,
    #[arg(long, default_value_t = 3.0)]
    pub outlier_multiplier: f64,
    #[arg(long, default_value_t = 1.5)]
    pub mild_multiplier: f64,
    /// Systems entering the outlier boxplot.
    #[arg(long, value_enum, default_value = "all")]
    pub subset: Subset,
    /// File listing tags of pooled runs, one per line.
    #[arg(long)]
    pub pooled: Option<PathBuf>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum CurveModeArg {
    PerSystem,
    PerTopic,
}

#[derive(Debug, Args)]
pub struct CurvesArgs {
    #[arg(long)]
    pub runs: PathBuf,
    #[arg(long)]
    pub qrels: PathBuf,
    #[arg(long, default_value_t = 0.5)]
    pub phi: f64,
    #[arg(long, default_value_t = 1)]
    pub threshold: u32,
    #[arg(long, value_enum, default_value = "per-system")]
    pub mode: CurveModeArg,
    /// System whose topics to plot in per-topic mode.
    #[arg(long, required_if_eq("mode", "per-topic"))]
    pub system: Option<String>,
    #[arg(long)]
    pub pooled: Option<PathBuf>,
    #[arg(long, default_value_t = 1000)]
    pub depth: usize,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    if let Some(n) = cli.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
        {
            eprintln!("qvfuse: error: cannot configure {n} threads: {e}");
            return ExitCode::FAILURE;
        }
    }
    match commands::run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("qvfuse: error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
