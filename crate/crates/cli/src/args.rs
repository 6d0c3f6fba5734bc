use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};

#[derive(Debug, Parser)]
#[command(name = "hygieia", version, about = "Agentic phenotype-to-diagnosis pipeline")]
pub struct Cli {
    /// Config file; falls back to $HYGIEIA_CONFIG, then built-in defaults.
    #[arg(long, global = true, env = "HYGIEIA_CONFIG")]
    pub config: Option<PathBuf>,
    /// Scripted responses replacing every configured backend.
    #[arg(long, global = true)]
    pub script: Option<PathBuf>,
    /// Log verbosity (repeat for more).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    pub verbose: u8,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Diagnose one case.
    Diagnose(CaseArgs),
    /// Rank candidate genes for one case.
    Genes(CaseArgs),
    /// Fit or evaluate the KNN router.
    #[command(subcommand)]
    Router(RouterCommand),
    /// Run a benchmark and report Recall@K.
    Bench(BenchArgs),
    /// Run the HTTP service until SIGTERM or Ctrl-C.
    Serve(ServeArgs),
}

#[derive(Debug, Args)]
pub struct CaseArgs {
    /// Semicolon-separated phenotype descriptions.
    #[arg(long, required = true)]
    pub phenotypes: String,
    /// Semicolon-separated gene symbols found by sequencing.
    #[arg(long)]
    pub genes: Option<String>,
    /// Free-text clinical notes.
    #[arg(long)]
    pub notes: Option<String>,
    #[arg(long, default_value = "cli-case")]
    pub id: String,
    /// Ranked answers to print (1, 5 or 10).
    #[arg(long)]
    pub top: Option<usize>,
    /// Self-consistency samples.
    #[arg(long)]
    pub samples: Option<u32>,
    /// Verifier rounds before the fallback summary.
    #[arg(long)]
    pub max_iters: Option<u32>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Print the full reasoning path.
    #[arg(long)]
    pub trace: bool,
    /// Print the outcome as JSON instead of text.
    #[arg(long)]
    pub json: bool,
}

#[derive(Debug, Subcommand)]
pub enum RouterCommand {
    /// Fit a model from labeled JSONL and write it.
    Fit {
        #[arg(long)]
        train: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Neighbors per vote; defaults to the pipeline knn_k.
        #[arg(long)]
        k: Option<usize>,
        #[arg(long, value_enum, default_value_t = MetricArg::Cosine)]
        metric: MetricArg,
    },
    /// Print accuracy and the confusion table on labeled JSONL.
    Eval {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        test: PathBuf,
    },
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum MetricArg {
    Cosine,
    Euclidean,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum TaskArg {
    Diagnose,
    Genes,
}

#[derive(Debug, Args)]
pub struct BenchArgs {
    #[arg(long)]
    pub dataset: PathBuf,
    #[arg(long, value_enum, default_value_t = TaskArg::Diagnose)]
    pub task: TaskArg,
    /// Comma-separated cutoffs from {1, 5, 10}.
    #[arg(long, value_delimiter = ',', default_values_t = [1usize, 5, 10])]
    pub k: Vec<usize>,
    /// Where to write the JSON report.
    #[arg(long)]
    pub report: Option<PathBuf>,
    /// Cases evaluated concurrently.
    #[arg(long, default_value_t = 1)]
    pub parallel: usize,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub samples: Option<u32>,
    #[arg(long)]
    pub max_iters: Option<u32>,
    /// Skip malformed dataset lines instead of failing.
    #[arg(long)]
    pub lenient: bool,
    /// Dataset name recorded in the report; defaults to the file stem.
    #[arg(long)]
    pub name: Option<String>,
}

#[derive(Debug, Args)]
pub struct ServeArgs {
    /// Overrides the configured listen address.
    #[arg(long)]
    pub listen: Option<String>,
}
