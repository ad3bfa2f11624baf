//! Command-line front end: `gradcheck`, `train`, `analyze` and `eval`.

mod commands;
pub mod config;

use std::ffi::OsString;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

pub use commands::{AnalyzeReport, DataSource, OffDiagonalStats, RunManifest, MANIFEST_FILE};
pub use config::{BaseName, FileConfig, LossName, SyntheticSpec, Variant};

pub const DEFAULT_OUT_DIR: &str = "anticollapse-out";
pub const DEFAULT_EPOCHS: usize = 200;
pub const DEFAULT_EVAL_EVERY: usize = 10;
pub const DEFAULT_BINS: usize = 20;
pub const DEFAULT_KS: [usize; 2] = [1, 2];
pub const DEFAULT_MAP_CUTOFF: usize = 1000;

#[derive(Parser, Debug)]
#[command(name = "anticollapse", version, about = "Coding-rate anti-collapse losses for metric learning")]
pub struct Cli {
    #[command(flatten)]
    pub common: CommonArgs,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Args, Debug, Clone, Default)]
pub struct CommonArgs {
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// JSON file with default values; flags override it.
    #[arg(long, global = true, value_name = "PATH")]
    pub config: Option<PathBuf>,
    #[arg(long, global = true, value_name = "DIR")]
    pub out_dir: Option<PathBuf>,
    /// Coding-rate precision ε [default: 0.5].
    #[arg(long, global = true)]
    pub epsilon: Option<f64>,
    /// Weight of the base proxy loss in `antico` [default: 0.0035].
    #[arg(long, global = true)]
    pub nu: Option<f64>,
    /// Proxy Anchor scale [default: 32].
    #[arg(long, global = true)]
    pub alpha: Option<f64>,
    /// Proxy Anchor margin [default: 0.1].
    #[arg(long, global = true)]
    pub delta: Option<f64>,
    /// Proxies entering the rate term of `antico` [default: mini-batch].
    #[arg(long, global = true, value_enum)]
    pub variant: Option<Variant>,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Compare analytic gradients with central finite differences.
    Gradcheck(GradcheckArgs),
    /// Train embeddings and proxies, writing traces and final artifacts.
    Train(TrainArgs),
    /// Coding rates, similarity histogram and proxy similarity of a saved run.
    Analyze(AnalyzeArgs),
    /// Retrieval and clustering metrics as JSON.
    Eval(EvalArgs),
}

#[derive(Args, Debug, Clone, Default)]
pub struct GradcheckArgs {
    /// Check a single family (coding_rate, pair_anticollapse, proxy_nca,
    /// proxy_anchor, proxy_anticollapse).
    #[arg(long)]
    pub loss: Option<String>,
    /// Seeded instances per family [default: 20].
    #[arg(long)]
    pub cases: Option<usize>,
    #[arg(long, hide = true)]
    pub flip_sign: bool,
}

#[derive(Args, Debug, Clone, Default)]
pub struct TrainArgs {
    /// Synthetic mixture as key=value pairs: classes, per-class, dim, noise,
    /// seed, orthonormal.
    #[arg(long, num_args = 0.., value_name = "KEY=VALUE", conflicts_with = "input")]
    pub synthetic: Option<Vec<String>>,
    /// Embedding file (`.acem` binary or `.csv`).
    #[arg(long)]
    pub input: Option<PathBuf>,
    #[arg(long)]
    pub renormalize: bool,
    /// [default: antico]
    #[arg(long, value_enum)]
    pub loss: Option<LossName>,
    /// Base proxy loss of `antico` and `pair+proxy` [default: pa].
    #[arg(long, value_enum)]
    pub base: Option<BaseName>,
    /// [default: 200]
    #[arg(long)]
    pub epochs: Option<usize>,
    /// [default: 0.01]
    #[arg(long)]
    pub lr: Option<f64>,
    /// Proxy learning rate as a multiple of `--lr` [default: 100].
    #[arg(long = "proxy-lr-mult")]
    pub proxy_lr_multiplier: Option<f64>,
    /// Classes per batch, clamped to the number of classes [default: 30].
    #[arg(long)]
    pub classes_per_batch: Option<usize>,
    /// Samples per class in a batch [default: 3].
    #[arg(long)]
    pub samples_per_class: Option<usize>,
    /// [default: 10]
    #[arg(long)]
    pub eval_every: Option<usize>,
    #[arg(long)]
    pub with_replacement: bool,
    /// Also train this loss on the same data and seed, under `baseline/`,
    /// and write `comparison.json`.
    #[arg(long, value_enum)]
    pub compare_with: Option<LossName>,
}

#[derive(Args, Debug, Clone, Default)]
pub struct AnalyzeArgs {
    #[arg(long)]
    pub input: Option<PathBuf>,
    #[arg(long)]
    pub proxies: Option<PathBuf>,
    #[arg(long)]
    pub renormalize: bool,
    /// Histogram bins over [-1, 1] [default: 20].
    #[arg(long)]
    pub bins: Option<usize>,
}

#[derive(Args, Debug, Clone, Default)]
pub struct EvalArgs {
    #[arg(long)]
    pub input: Option<PathBuf>,
    #[arg(long)]
    pub renormalize: bool,
    /// Recall cutoffs [default: 1,2].
    #[arg(long, value_delimiter = ',')]
    pub k: Option<Vec<usize>>,
    /// mAP cutoffs [default: 1000].
    #[arg(long, value_delimiter = ',')]
    pub map_cutoff: Option<Vec<usize>>,
}

/// Parses `args` (program name first) and runs the command. Exit code 0 on
/// success, 1 when a gradient check fails, 2 on any error.
pub fn run<I, S>(args: I) -> ExitCode
where
    I: IntoIterator<Item = S>,
    S: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(2) } else { ExitCode::SUCCESS };
        }
    };
    match commands::dispatch(cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}
