//! Argument definitions.

use std::path::PathBuf;
use std::str::FromStr;

use clap::{Args, Parser, Subcommand, ValueEnum};
use evocache::engine::{CapacitySpec, SizeMode};
use evocache::rank::Mechanism;
use evocache::search::Objective;

use crate::policy_ref::PolicyRef;

#[derive(Debug, Parser)]
#[command(
    name = "evocache",
    version,
    about = "Cache eviction policy simulator and policy search"
)]
pub struct Cli {
    /// JSON object of default flags; command-line flags take precedence.
    #[arg(long, global = true, value_name = "FILE")]
    pub config: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Replay traces through policies and report hit rates.
    Simulate(SimulateArgs),
    /// Summarize a results CSV written by `simulate`.
    #[command(subcommand)]
    Report(ReportCommand),
    /// Search for a policy program that maximizes an objective.
    Search(SearchArgs),
    /// Fit a k-means model over trace features.
    Cluster(ClusterArgs),
    /// Map traces to the clusters of a saved model.
    Classify(ClassifyArgs),
    /// List or write the bundled synthetic workloads.
    Gen(GenArgs),
}

/// Trace inputs shared by several commands.
#[derive(Debug, Clone, Args)]
pub struct TraceInputs {
    /// Trace file with one `object_id[,size]` line per request; repeatable.
    #[arg(long = "trace", value_name = "PATH")]
    pub traces: Vec<PathBuf>,
    /// Bundled workload name (see `gen --list`); repeatable.
    #[arg(long, value_name = "NAME")]
    pub bundled: Vec<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ModeArg {
    /// Capacity counts objects; every object takes one slot.
    Slots,
    /// Capacity counts bytes; objects take their size.
    Bytes,
}

impl From<ModeArg> for SizeMode {
    fn from(m: ModeArg) -> SizeMode {
        match m {
            ModeArg::Slots => SizeMode::SizeAgnostic,
            ModeArg::Bytes => SizeMode::SizeAware,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Text,
    Csv,
    Json,
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    #[command(flatten)]
    pub inputs: TraceInputs,
    /// `builtin:<name>[,mechanism=M]`, `dsl:<file>[,mechanism=M]` or `topo:<file.json>`; repeatable.
    #[arg(long = "policy", value_name = "REF", required = true)]
    pub policies: Vec<PolicyRef>,
    /// `tiny`, `small`, `large`, `frac:<x>` or `abs:<n>`; repeatable.
    #[arg(long = "capacity", value_name = "SPEC", default_value = "small")]
    pub capacities: Vec<CapacitySpec>,
    #[arg(long, value_enum, default_value_t = ModeArg::Slots)]
    pub mode: ModeArg,
    /// Seed for randomized policies.
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Cap on scoring-program evaluations per simulation.
    #[arg(long, value_name = "N")]
    pub eval_budget: Option<u64>,
    /// Also write the table to this file (JSON if it ends in `.json`, else CSV).
    #[arg(long, value_name = "PATH")]
    pub out: Option<PathBuf>,
    /// Format of the table on stdout.
    #[arg(long, value_enum, default_value_t = Format::Text)]
    pub format: Format,
    /// Add a wall-clock column. Timings make output non-reproducible.
    #[arg(long)]
    pub timed: bool,
}

#[derive(Debug, Subcommand)]
pub enum ReportCommand {
    /// Count, per capacity and policy, the traces on which the policy has the best hit rate.
    BestCounts(ReportArgs),
    /// Miss-rate reduction of each policy relative to a baseline.
    Mrr(MrrArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Metric {
    ObjectHitRate,
    ByteHitRate,
}

#[derive(Debug, Args)]
pub struct ReportArgs {
    /// Results CSV from `simulate --out`.
    #[arg(long, value_name = "CSV")]
    pub results: PathBuf,
    #[arg(long, value_enum, default_value_t = Metric::ObjectHitRate)]
    pub metric: Metric,
    /// Hit rates within this distance of the best count as ties.
    #[arg(long, default_value_t = 1e-12)]
    pub tie_tolerance: f64,
    #[arg(long, value_enum, default_value_t = Format::Text)]
    pub format: Format,
}

#[derive(Debug, Args)]
pub struct MrrArgs {
    #[arg(long, value_name = "CSV")]
    pub results: PathBuf,
    /// Policy label used as the baseline.
    #[arg(long, default_value = "fifo")]
    pub baseline: String,
    /// One row per instance instead of per-policy means.
    #[arg(long)]
    pub per_instance: bool,
    #[arg(long, value_enum, default_value_t = Format::Text)]
    pub format: Format,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum GeneratorKind {
    /// Deterministic grammar-preserving mutations.
    Mutation,
    /// A chat-completions language model.
    Llm,
}

/// `hit-rate`, `mrr` or `weighted:<hit_rate_weight>,<mrr_weight>`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ObjectiveArg(pub Objective);

impl FromStr for ObjectiveArg {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "hit-rate" => Ok(ObjectiveArg(Objective::ObjectHitRate)),
            "mrr" => Ok(ObjectiveArg(Objective::MrrVsFifo)),
            _ => {
                let w = s
                    .strip_prefix("weighted:")
                    .ok_or_else(|| format!("unknown objective {s:?}"))?;
                let (a, b) = w
                    .split_once(',')
                    .ok_or("weighted objective needs two weights: weighted:A,B")?;
                let parse = |x: &str| {
                    x.trim()
                        .parse::<f64>()
                        .map_err(|_| format!("bad weight {x:?}"))
                };
                Ok(ObjectiveArg(Objective::Weighted {
                    hit_rate_weight: parse(a)?,
                    mrr_weight: parse(b)?,
                }))
            }
        }
    }
}

#[derive(Debug, Args)]
pub struct SearchArgs {
    /// Evaluation traces; defaults to the bundled `zipf_scan` workload.
    #[command(flatten)]
    pub inputs: TraceInputs,
    #[arg(long, default_value = "small", value_name = "SPEC")]
    pub capacity: CapacitySpec,
    #[arg(long, value_enum, default_value_t = ModeArg::Slots)]
    pub mode: ModeArg,
    /// Selection mechanism for rank programs.
    #[arg(long, default_value = "pq", value_name = "M")]
    pub mechanism: Mechanism,
    /// Search routing programs for this queue skeleton instead of rank programs.
    #[arg(long, value_name = "FILE.json")]
    pub topology: Option<PathBuf>,
    #[arg(long, default_value = "hit-rate", value_name = "OBJ")]
    pub objective: ObjectiveArg,
    #[arg(long, value_enum, default_value_t = GeneratorKind::Mutation)]
    pub generator: GeneratorKind,
    /// Rounds after the seed round.
    #[arg(long, default_value_t = 15)]
    pub rounds: u32,
    #[arg(long, default_value_t = 25)]
    pub per_round: usize,
    /// Top candidates shown to the generator each round.
    #[arg(long, default_value_t = 2)]
    pub exemplars: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Stop when the best objective gains less than the epsilon over this many rounds.
    #[arg(long, value_name = "ROUNDS")]
    pub plateau_window: Option<usize>,
    #[arg(long, default_value_t = 0.001)]
    pub plateau_epsilon: f64,
    /// Candidate database (JSON lines), overwritten on start.
    #[arg(long, default_value = "candidates.jsonl", value_name = "PATH")]
    pub db: PathBuf,
    #[arg(long, value_name = "N")]
    pub eval_budget: Option<u64>,
    /// Seed program file replacing the default seed; repeatable.
    #[arg(long = "seed-program", value_name = "FILE")]
    pub seed_programs: Vec<PathBuf>,
    #[arg(long, value_name = "URL")]
    pub endpoint: Option<String>,
    #[arg(long, value_name = "NAME")]
    pub model: Option<String>,
    #[arg(long, default_value_t = 1.0)]
    pub temperature: f64,
    /// Append every model exchange to this JSON-lines file.
    #[arg(long, value_name = "PATH")]
    pub record: Option<PathBuf>,
    /// Play back replies from a recorded JSON-lines file instead of calling a model.
    #[arg(long, value_name = "PATH")]
    pub replay: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ClusterArgs {
    /// CSV trace files.
    pub traces: Vec<PathBuf>,
    /// Bundled workload name; repeatable.
    #[arg(long, value_name = "NAME")]
    pub bundled: Vec<String>,
    /// Include this many generated traces from each workload family.
    #[arg(long, value_name = "N")]
    pub families: Option<usize>,
    #[arg(long, default_value_t = 10)]
    pub k: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Requests per trace used for features.
    #[arg(long, default_value_t = evocache::instances::DEFAULT_PREFIX)]
    pub prefix: usize,
    #[arg(long, default_value_t = 1)]
    pub restarts: usize,
    /// Novelty threshold as a multiple of each cluster's p95 radius.
    #[arg(long)]
    pub novelty_factor: Option<f64>,
    /// Write the fitted model here.
    #[arg(long, value_name = "PATH")]
    pub model: Option<PathBuf>,
    /// Write `trace,cluster` rows here.
    #[arg(long, value_name = "PATH")]
    pub assignments: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = Format::Text)]
    pub format: Format,
}

#[derive(Debug, Args)]
pub struct ClassifyArgs {
    #[arg(long, value_name = "PATH")]
    pub model: PathBuf,
    /// CSV trace files.
    pub traces: Vec<PathBuf>,
    #[arg(long, value_name = "NAME")]
    pub bundled: Vec<String>,
    #[arg(long, default_value_t = evocache::instances::DEFAULT_PREFIX)]
    pub prefix: usize,
    #[arg(long, value_enum, default_value_t = Format::Text)]
    pub format: Format,
}

#[derive(Debug, Args)]
pub struct GenArgs {
    /// Print the bundled workload names.
    #[arg(long)]
    pub list: bool,
    /// Workload to write; repeatable.
    #[arg(long, value_name = "NAME")]
    pub bundled: Vec<String>,
    /// Write every bundled workload.
    #[arg(long)]
    pub all: bool,
    #[arg(long, default_value = ".", value_name = "DIR")]
    pub out_dir: PathBuf,
}
