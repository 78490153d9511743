//! Command-line front end for the cold-start active learning engine.
//!
//! The binary is a thin wrapper over [`run`], which tests can also call
//! in-process.

mod commands;
mod experiment;

use std::path::PathBuf;
use std::ffi::OsString;

use clap::{Args, Parser, Subcommand};
use coldstart_al::initsample::PoolKind;
use coldstart_al::{ErrorKind, Split, Strategy};

#[derive(Parser, Debug)]
#[command(
    name = "coldstart-al",
    version,
    about = "Cold-start active learning over precomputed sentence embeddings"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Generate a synthetic embedding file and labels file
    GenSynthetic(GenSyntheticArgs),
    /// Learn a linear projection from student to teacher embeddings
    Distill(DistillArgs),
    /// k-means clustering with medoid extraction
    Cluster(ClusterArgs),
    /// Dunn index of a clustering
    Dunn(DunnArgs),
    /// Simulate the annotation effort of drawing the initial labeled set
    SimulateInitial(SimulateArgs),
    /// Run active learning experiments
    RunAl(RunAlArgs),
    /// Aggregate run reports into F1 curves
    Report(ReportArgs),
    /// Run the whole pipeline from a TOML config
    Experiment(ExperimentArgs),
}

#[derive(Args, Debug, Clone)]
struct Common {
    /// Base seed for every random stream
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Worker threads, 0 for all cores; outputs do not depend on it
    #[arg(long, default_value_t = 0)]
    jobs: usize,
    /// Output directory
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, Debug)]
struct GenSyntheticArgs {
    /// Number of samples
    #[arg(long)]
    n: usize,
    /// Embedding dimension
    #[arg(long)]
    dim: usize,
    /// Number of classes
    #[arg(long)]
    classes: usize,
    /// Comma-separated class prevalences summing to 1
    #[arg(long, value_delimiter = ',')]
    prevalences: Vec<f64>,
    /// Minimum distance between class centers
    #[arg(long, default_value_t = 1.0)]
    separation: f64,
    /// Per-coordinate noise standard deviation
    #[arg(long, default_value_t = 0.1)]
    sigma: f64,
    /// Also write a rotated student space of this dimension
    #[arg(long)]
    student_dim: Option<usize>,
    /// Scale of the teacher signal inside the student space
    #[arg(long, default_value_t = 1.0)]
    student_scale: f64,
    /// Noise standard deviation of the extra student coordinates
    #[arg(long, default_value_t = 0.5)]
    nuisance_sigma: f64,
    #[command(flatten)]
    common: Common,
}

#[derive(Args, Debug)]
struct DistillArgs {
    /// Student embeddings (.aleb)
    #[arg(long)]
    student: PathBuf,
    /// Teacher embeddings (.aleb), row-aligned with the student
    #[arg(long)]
    teacher: PathBuf,
    #[arg(long, default_value_t = 10)]
    epochs: usize,
    #[arg(long, default_value_t = 1e-4)]
    lr: f64,
    #[arg(long, default_value_t = 32)]
    batch: usize,
    /// Share of rows held out for the final MSE
    #[arg(long, default_value_t = 0.1)]
    holdout: f64,
    /// Use Adam bias correction
    #[arg(long)]
    bias_correction: bool,
    #[command(flatten)]
    common: Common,
}

#[derive(Args, Debug)]
struct ClusterArgs {
    /// Embeddings (.aleb); rows are L2-normalized before clustering
    #[arg(long)]
    embeddings: PathBuf,
    /// Labels (.jsonl), used to select the train split
    #[arg(long, required_unless_present = "all_rows")]
    labels: Option<PathBuf>,
    /// Number of clusters [default: round(pool size / 10)]
    #[arg(long)]
    k: Option<usize>,
    /// Cluster every row instead of the train split
    #[arg(long)]
    all_rows: bool,
    #[arg(long, default_value_t = coldstart_al::cluster::DEFAULT_MAX_ITERS)]
    max_iters: usize,
    #[arg(long, default_value_t = coldstart_al::cluster::DEFAULT_TOL)]
    tol: f64,
    #[command(flatten)]
    common: Common,
}

#[derive(Args, Debug)]
struct DunnArgs {
    /// Embeddings (.aleb); rows are L2-normalized first
    #[arg(long)]
    embeddings: PathBuf,
    /// Clusters file written by `cluster`
    #[arg(long)]
    clusters: PathBuf,
    #[command(flatten)]
    common: Common,
}

#[derive(Args, Debug)]
struct SimulateArgs {
    /// Labels (.jsonl)
    #[arg(long)]
    labels: PathBuf,
    /// Clusters file; required for the medoid pool
    #[arg(long)]
    clusters: Option<PathBuf>,
    /// Pool to draw from: full, medoids or both
    #[arg(long, default_value = "both")]
    pool: PoolArg,
    #[arg(long, default_value_t = coldstart_al::initsample::DEFAULT_TRIALS)]
    trials: usize,
    #[arg(long, default_value_t = 5)]
    init_pos: usize,
    #[arg(long, default_value_t = 5)]
    init_neg: usize,
    /// Split forming the full pool
    #[arg(long, default_value = "train")]
    full_pool_split: Split,
    /// Comma-separated categories [default: all]
    #[arg(long, value_delimiter = ',')]
    categories: Vec<String>,
    #[command(flatten)]
    common: Common,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
enum PoolArg {
    Full,
    Medoids,
    Both,
}

impl PoolArg {
    fn kinds(self) -> Vec<PoolKind> {
        match self {
            PoolArg::Full => vec![PoolKind::Full],
            PoolArg::Medoids => vec![PoolKind::Medoids],
            PoolArg::Both => vec![PoolKind::Full, PoolKind::Medoids],
        }
    }
}

#[derive(Args, Debug)]
struct RunAlArgs {
    /// Embeddings (.aleb) the classifier sees
    #[arg(long)]
    embeddings: PathBuf,
    /// Labels (.jsonl)
    #[arg(long)]
    labels: PathBuf,
    /// Projection (.alpj) applied to the embeddings first
    #[arg(long)]
    projection: Option<PathBuf>,
    /// Comma-separated strategies: random, hard_mining, dropout_perceptron, dal
    #[arg(long, value_delimiter = ',', default_value = "random")]
    strategy: Vec<Strategy>,
    #[arg(long, default_value_t = 5)]
    iterations: usize,
    #[arg(long, default_value_t = 10)]
    batch: usize,
    /// Number of seeds, counted up from --seed
    #[arg(long, default_value_t = 3)]
    seeds: u64,
    #[arg(long, default_value_t = 5)]
    init_pos: usize,
    #[arg(long, default_value_t = 5)]
    init_neg: usize,
    /// Draw the initial set from the medoids in this clusters file
    #[arg(long)]
    clusters: Option<PathBuf>,
    /// Comma-separated categories [default: all]
    #[arg(long, value_delimiter = ',')]
    categories: Vec<String>,
    /// Monte Carlo dropout passes
    #[arg(long, default_value_t = coldstart_al::acquire::DEFAULT_MC_PASSES)]
    mc_passes: usize,
    /// Classifier learning rate
    #[arg(long, default_value_t = 1e-2)]
    lr: f64,
    #[arg(long, default_value_t = 100)]
    max_epochs: usize,
    #[arg(long, default_value_t = 10)]
    patience: usize,
    #[command(flatten)]
    common: Common,
}

#[derive(Args, Debug)]
struct ReportArgs {
    /// Directory of run report files
    #[arg(long)]
    runs: PathBuf,
    #[command(flatten)]
    common: Common,
}

#[derive(Args, Debug)]
struct ExperimentArgs {
    /// Experiment config (.toml)
    #[arg(long)]
    config: PathBuf,
    /// Overrides the config seed
    #[arg(long)]
    seed: Option<u64>,
    /// Worker threads, 0 for all cores; outputs do not depend on it
    #[arg(long, default_value_t = 0)]
    jobs: usize,
    /// Overrides the config output directory
    #[arg(long)]
    out: Option<PathBuf>,
}

/// A failed invocation: exit code and the single-line message for stderr.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Failure {
    pub code: u8,
    pub line: String,
}

fn kind_tag(kind: ErrorKind) -> (&'static str, u8) {
    match kind {
        ErrorKind::Usage => ("usage", 2),
        ErrorKind::Data => ("data", 3),
        ErrorKind::Numerical => ("numerical", 4),
    }
}

fn one_line(msg: &str) -> String {
    msg.split_whitespace().collect::<Vec<_>>().join(" ")
}

/// Parse `args` (program name first) and run the command. Help and version
/// requests print and succeed.
pub fn run<I, T>(args: I) -> std::result::Result<(), Failure>
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) if !e.use_stderr() => {
            let _ = e.print();
            return Ok(());
        }
        Err(e) => {
            let text = e.to_string();
            let head: Vec<&str> = text
                .lines()
                .take_while(|l| !l.trim().is_empty() && !l.starts_with("Usage:"))
                .collect();
            let msg = head.join(" ");
            return Err(Failure {
                code: 2,
                line: format!("error[usage]: {}", one_line(msg.trim_start_matches("error: "))),
            });
        }
    };
    commands::dispatch(cli.command).map_err(|e| {
        let (tag, code) = kind_tag(e.kind());
        Failure {
            code,
            line: format!("error[{tag}]: {}", one_line(&e.to_string())),
        }
    })
}
