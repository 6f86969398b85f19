use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};

#[derive(Debug, Parser)]
#[command(
    name = "tokenloss",
    version,
    about = "Per-token cross-entropy distribution diagnostics"
)]
pub struct Cli {
    /// Worker threads (defaults to TOKENLOSS_THREADS, then the core count).
    #[arg(long, global = true)]
    pub threads: Option<usize>,

    /// Significant digits for numbers in CSV and table output.
    #[arg(long, global = true, default_value_t = 6)]
    pub digits: usize,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Mean and percentile summaries per checkpoint.
    Summarize(SummarizeArgs),
    /// Concordance of a summary set over checkpoint families.
    Concord(ConcordArgs),
    /// Standardized percentile profiles, profile distances and loss bands.
    Shape(ShapeArgs),
    /// Correlation sweeps, selection, trajectories and pass@k intervals.
    Correlate(CorrelateArgs),
    /// Run the tabular top-K distillation lab.
    DistillDemo(DemoArgs),
    /// Write a combined report for a manifest.
    Report(ReportArgs),
}

#[derive(Debug, Args, Clone)]
pub struct ModeArgs {
    /// Always sort the full loss vector.
    #[arg(long, conflicts_with = "sketch")]
    pub exact: bool,
    /// Always use the streaming quantile sketch.
    #[arg(long)]
    pub sketch: bool,
    /// Rank-error bound of the sketch, as a fraction of the token count.
    #[arg(long, default_value_t = 1e-3)]
    pub epsilon: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Csv,
    Json,
}

#[derive(Debug, Args)]
pub struct SummarizeArgs {
    /// Loss dumps to summarize (binary or text).
    pub paths: Vec<PathBuf>,
    #[arg(long, conflicts_with = "paths")]
    pub manifest: Option<PathBuf>,
    /// Restrict manifest checkpoints to these families.
    #[arg(long = "family")]
    pub families: Vec<String>,
    /// Comma-separated percentiles, e.g. 1,5,50,95,99.
    #[arg(long)]
    pub ks: Option<String>,
    #[arg(long, value_enum, default_value_t = Format::Csv)]
    pub format: Format,
    #[command(flatten)]
    pub mode: ModeArgs,
    /// Write to this file instead of stdout.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ConcordArgs {
    #[arg(long)]
    pub manifest: PathBuf,
    /// Families to report; all families with at least two checkpoints by default.
    #[arg(long = "family")]
    pub families: Vec<String>,
    /// Comma-separated summary set, e.g. mean,median,p95.
    #[arg(long, default_value = "mean,median,p95")]
    pub summaries: String,
    /// Decimal places for concordance fractions.
    #[arg(long, default_value_t = 2)]
    pub decimals: usize,
    #[command(flatten)]
    pub mode: ModeArgs,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Section {
    Profiles,
    Distances,
    FamilyDistances,
    Tail,
    Bands,
    All,
}

#[derive(Debug, Args)]
pub struct ShapeArgs {
    #[arg(long)]
    pub manifest: PathBuf,
    /// Families to include; all by default.
    #[arg(long = "family")]
    pub families: Vec<String>,
    #[arg(long, value_enum, default_value_t = Section::All)]
    pub section: Section,
    /// Comma-separated band edges in nats.
    #[arg(long, default_value = "0.1,0.5,1.5,5,10")]
    pub bands: String,
    /// Add band deltas of every checkpoint against this one.
    #[arg(long)]
    pub reference: Option<String>,
    /// Standardized percentile used for the tail statistics.
    #[arg(long, default_value_t = 95)]
    pub tail_k: u8,
    /// Write one CSV per section into this directory.
    #[arg(long)]
    pub out_dir: Option<PathBuf>,
    #[command(flatten)]
    pub mode: ModeArgs,
}

#[derive(Debug, Args)]
pub struct CorrelateArgs {
    #[arg(long)]
    pub manifest: Option<PathBuf>,
    #[arg(long)]
    pub family: Option<String>,
    /// Metric name, looked up in manifest metrics or --metric-file.
    #[arg(long)]
    pub metric: Option<String>,
    /// Two-column checkpoint_id,value file providing --metric.
    #[arg(long)]
    pub metric_file: Option<PathBuf>,
    /// Correlate the mean and p5..p95 with the metric.
    #[arg(long)]
    pub sweep: bool,
    /// Comma-separated selection rules; CE summaries are minimized, metrics maximized.
    #[arg(long)]
    pub select: Option<String>,
    /// Checkpoints with this objective, ordered by step, form a trajectory.
    #[arg(long)]
    pub trajectory: Option<String>,
    /// Summary tracked along the trajectory.
    #[arg(long, default_value = "median")]
    pub summary: String,
    /// Report the first step strictly below the reference.
    #[arg(long)]
    pub crossing: bool,
    #[arg(long, conflicts_with = "reference_checkpoint")]
    pub reference: Option<f64>,
    /// Use this checkpoint's summary as the crossing reference.
    #[arg(long)]
    pub reference_checkpoint: Option<String>,
    /// Add a min-max normalized column to the trajectory.
    #[arg(long)]
    pub normalize: bool,
    /// File of per-prompt success fractions, one per line.
    #[arg(long)]
    pub passk: Option<PathBuf>,
    /// Samples drawn per prompt for --passk.
    #[arg(long, default_value_t = 1)]
    pub samples: u32,
    #[command(flatten)]
    pub mode: ModeArgs,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum StepRuleArg {
    Mirror,
    Logit,
}

#[derive(Debug, Args)]
pub struct DemoArgs {
    #[arg(long, default_value_t = 64)]
    pub vocab: usize,
    #[arg(long, default_value_t = 1.1)]
    pub zipf: f64,
    #[arg(long, default_value_t = 200_000)]
    pub length: usize,
    /// Log-normal spread of the ground-truth rows around the Zipf weights.
    #[arg(long, default_value_t = 3.0)]
    pub dispersion: f64,
    #[arg(long, default_value_t = 0.1)]
    pub alpha: f64,
    /// Comma-separated truncation levels; must include "full".
    #[arg(long, default_value = "2,4,8,16,full")]
    pub k: String,
    #[arg(long, default_value_t = 20_000)]
    pub steps: usize,
    #[arg(long, default_value_t = 0.5)]
    pub lr: f64,
    #[arg(long, value_enum, default_value_t = StepRuleArg::Mirror)]
    pub step_rule: StepRuleArg,
    /// Student probability floor.
    #[arg(long, default_value_t = 1e-9)]
    pub floor: f64,
    #[arg(long, default_value_t = 50_000)]
    pub held_out: usize,
    /// Training steps at which student snapshots are evaluated and dumped.
    #[arg(long, default_value = "1,3,10,30")]
    pub snapshots: String,
    #[arg(long, default_value_t = 7)]
    pub seed: u64,
    /// Dose-response CSV; loss dumps and manifest.toml go next to it.
    #[arg(long, default_value = "dose.csv")]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct ReportArgs {
    #[arg(long)]
    pub manifest: PathBuf,
    #[arg(long)]
    pub out_dir: PathBuf,
    /// Families to report; all by default.
    #[arg(long = "family")]
    pub families: Vec<String>,
    #[arg(long, default_value = "mean,median,p95")]
    pub summaries: String,
    /// Comma-separated percentiles for the summary table.
    #[arg(long)]
    pub ks: Option<String>,
    /// Metric for selection and the percentile sweep.
    #[arg(long)]
    pub metric: Option<String>,
    #[arg(long)]
    pub metric_file: Option<PathBuf>,
    /// Selection rules; defaults to mean,median,<metric>.
    #[arg(long)]
    pub select: Option<String>,
    #[arg(long, default_value = "0.1,0.5,1.5,5,10")]
    pub bands: String,
    #[arg(long, default_value_t = 2)]
    pub decimals: usize,
    #[command(flatten)]
    pub mode: ModeArgs,
}
