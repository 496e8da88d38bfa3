//! Command-line interface: `prepare`, `train`, `evaluate`, `recommend`,
//! `gradcheck` and `synth`.
//!
//! Exit codes: 0 success, 1 validation or argument error, 2 data or format
//! error, 3 divergence or a failed gradient check.

mod commands;

use std::ffi::OsString;
use std::io::Write;
use std::path::PathBuf;

use clap::{ArgAction, Args, Parser, Subcommand, ValueEnum};

use crate::gnn::Aggr;
use crate::graph::SplitPart;

#[derive(Debug, Parser)]
#[command(name = "hetsage", version, about = "Graph-based anime rating prediction and recommendation")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Build a data directory from the anime and ratings CSV files.
    Prepare(PrepareArgs),
    /// Train a model on a data directory.
    Train(TrainArgs),
    /// Score a trained model on one split.
    Evaluate(EvaluateArgs),
    /// Top-k unwatched anime per user.
    Recommend(RecommendArgs),
    /// Compare analytic gradients with finite differences on a random graph.
    Gradcheck(GradcheckArgs),
    /// Write synthetic anime.csv and ratings.csv files.
    Synth(SynthArgs),
}

#[derive(Debug, Args)]
pub struct PrepareArgs {
    #[arg(long)]
    pub anime: PathBuf,
    #[arg(long)]
    pub ratings: PathBuf,
    /// Output data directory.
    #[arg(long)]
    pub out: PathBuf,
    /// Embedding CSV (`id,e0,...`). Without it, synopses are feature-hashed.
    #[arg(long, conflicts_with = "hash_dim")]
    pub embeddings: Option<PathBuf>,
    #[arg(long, default_value_t = crate::encoders::DEFAULT_HASH_DIM)]
    pub hash_dim: usize,
    /// Give anime missing from the embedding file a zero vector.
    #[arg(long)]
    pub allow_missing: bool,
    /// Keep the first N distinct users in file order.
    #[arg(long)]
    pub max_users: Option<usize>,
    #[arg(long, default_value_t = crate::graph::DEFAULT_SPLIT_RATIO)]
    pub ratio: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value = crate::encoders::DEFAULT_GENRE_SEPARATOR)]
    pub genre_sep: String,
    /// Keep only the first rating of a repeated (user, anime) pair.
    #[arg(long)]
    pub dedup: bool,
    /// Ratings column holding per-edge weights for weighted RMSE.
    #[arg(long)]
    pub weight_column: Option<String>,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[arg(long)]
    pub data: PathBuf,
    /// Output model file.
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long, default_value_t = 32)]
    pub hidden: usize,
    #[arg(long, default_value_t = 200)]
    pub epochs: usize,
    #[arg(long, default_value_t = 0.01)]
    pub lr: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = Aggr::Sum)]
    pub aggr: Aggr,
    /// L2-normalize rows after the first layer.
    #[arg(long, default_value_t = true, action = ArgAction::Set)]
    pub normalize: bool,
    /// L2-normalize the final embeddings.
    #[arg(long, default_value_t = false, action = ArgAction::Set)]
    pub normalize_final: bool,
    #[arg(long, default_value_t = 10)]
    pub log_every: usize,
    /// Clamp predictions to [1, 10] before computing RMSE.
    #[arg(long)]
    pub clamp_eval: bool,
    /// Start the output bias at the mean train rating.
    #[arg(long)]
    pub mean_init: bool,
}

#[derive(Debug, Args)]
pub struct EvaluateArgs {
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long, default_value = "test", value_parser = parse_split)]
    pub split: SplitPart,
    #[arg(long)]
    pub clamp_eval: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum OutputFormat {
    Text,
    Json,
}

#[derive(Debug, Args)]
pub struct RecommendArgs {
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long)]
    pub model: PathBuf,
    /// User id; repeat for several users.
    #[arg(long = "user", required = true)]
    pub users: Vec<String>,
    #[arg(long, default_value_t = crate::recsys::DEFAULT_K)]
    pub k: usize,
    #[arg(long, value_enum, default_value_t = OutputFormat::Text)]
    pub format: OutputFormat,
}

#[derive(Debug, Args)]
pub struct GradcheckArgs {
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = Aggr::Sum)]
    pub aggr: Aggr,
    #[arg(long, default_value_t = true, action = ArgAction::Set)]
    pub normalize: bool,
    #[arg(long, default_value_t = false, action = ArgAction::Set)]
    pub normalize_final: bool,
    /// Perturb one analytic gradient so the check must fail.
    #[arg(long, hide = true)]
    pub corrupt_backward: bool,
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    /// Directory receiving anime.csv and ratings.csv.
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 200)]
    pub users: usize,
    #[arg(long, default_value_t = 300)]
    pub anime: usize,
    #[arg(long, default_value_t = 5000)]
    pub ratings: usize,
    #[arg(long, default_value_t = 8)]
    pub genres: usize,
    #[arg(long, default_value_t = 0.5)]
    pub noise: f64,
    /// Exponent biasing which pairs are rated toward liked anime.
    #[arg(long, default_value_t = 2.0)]
    pub watch_bias: f64,
    #[arg(long, default_value_t = 7)]
    pub seed: u64,
}

fn parse_split(s: &str) -> Result<SplitPart, String> {
    s.parse().map_err(|e: crate::error::Error| e.to_string())
}

/// Parses `args` (program name first) and runs the command. Returns the
/// process exit code.
pub fn run<I, T>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let text = e.render().to_string();
            let _ = if code == 0 { out.write_all(text.as_bytes()) } else { err.write_all(text.as_bytes()) };
            return code;
        }
    };
    match commands::dispatch(cli.command, out, err) {
        Ok(code) => code,
        Err(e) => {
            let _ = writeln!(err, "error: {e}");
            e.exit_code()
        }
    }
}
