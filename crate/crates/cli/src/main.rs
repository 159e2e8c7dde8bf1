//! `nowcast`: dataset generation, preprocessing, training, evaluation,
//! prediction and rendering for next-frame cloud nowcasting.

mod commands;
mod render;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use nowcast_core::models::ModelKind;
use nowcast_core::objectives::LossKind;

#[derive(Parser, Debug)]
#[command(
    name = "nowcast",
    version,
    about = "Next-frame cloud nowcasting with hierarchical ConvLSTMs"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Generate bouncing-digit sequences into a container.
    GenMnistpp(GenArgs),
    /// Turn a directory of timestamped nephograms into aligned sequences.
    PrepNephograms(PrepArgs),
    /// Train a model and write checkpoints plus a JSON-lines log.
    Train(TrainArgs),
    /// Score a checkpoint on a dataset.
    Eval(EvalArgs),
    /// Write a container whose last frames are model predictions.
    Predict(PredictArgs),
    /// Draw inputs, ground truth and predictions side by side as a PGM grid.
    Render(RenderArgs),
}

#[derive(Args, Debug)]
pub struct GenArgs {
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub count: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Frames per sequence, the last one being the prediction target.
    #[arg(long, default_value_t = 10)]
    pub frames: usize,
    /// Side length of the square patch in pixels.
    #[arg(long, default_value_t = 64)]
    pub patch: usize,
    #[arg(long, default_value_t = 2)]
    pub digits: usize,
    /// IDX image file (MNIST layout) to draw digits from instead of the built-in glyphs.
    #[arg(long)]
    pub glyphs: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct PrepArgs {
    /// Directory of grayscale images with a 12-digit YYYYMMDDhhmm timestamp in each name.
    #[arg(long)]
    pub src: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Expected spacing between consecutive frames in minutes.
    #[arg(long, default_value_t = 30)]
    pub interval: i64,
    #[arg(long, default_value_t = 7)]
    pub seq_len: usize,
    #[arg(long, default_value_t = 200)]
    pub crop: usize,
    #[arg(long, default_value_t = 4)]
    pub crops_per_window: usize,
    /// `min`, `median`, or a path to a background image.
    #[arg(long, default_value = "min")]
    pub background: String,
    /// Crops darker than this mean after background removal are dropped.
    #[arg(long, default_value_t = 4.0)]
    pub min_mean: f64,
}

/// Architecture flags shared by the commands that build a model.
#[derive(Args, Debug, Clone)]
pub struct ModelArgs {
    #[arg(long, default_value = "fclstm", value_parser = parse_model)]
    pub model: ModelKind,
    /// Comma-separated widths. Defaults depend on the data: 32,32,64,64,128,128
    /// for 64-pixel digit sequences, 16,16,32,32,64,64 otherwise.
    #[arg(long, value_delimiter = ',')]
    pub channels: Option<Vec<usize>>,
    /// Input frames per prediction: 9 for 64-pixel digit sequences, 6 otherwise.
    #[arg(long)]
    pub frames_in: Option<usize>,
    #[arg(long)]
    pub peephole: bool,
}

#[derive(Args, Debug)]
pub struct TrainArgs {
    #[arg(long)]
    pub data: PathBuf,
    /// Separate evaluation container; without it `--train-frac` splits `--data`.
    #[arg(long)]
    pub eval_data: Option<PathBuf>,
    /// Fraction of `--data` used for training; 1 trains on everything without evaluation.
    #[arg(long, default_value_t = 0.8)]
    pub train_frac: f64,
    #[command(flatten)]
    pub model: ModelArgs,
    #[arg(long, default_value = "mse", value_parser = parse_loss)]
    pub loss: LossKind,
    #[arg(long, default_value_t = 0.002)]
    pub lr: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = 10)]
    pub epochs: usize,
    #[arg(long, default_value_t = 4)]
    pub batch_size: usize,
    /// Evaluate every this many epochs; 0 evaluates after the last one only.
    #[arg(long, default_value_t = 1)]
    pub eval_every: usize,
    #[arg(long, default_value_t = 30.0)]
    pub eccr_tau: f64,
    /// Last-epoch checkpoint; the best one is written as `<stem>.best.sckp`.
    #[arg(long)]
    pub ckpt: PathBuf,
    /// JSON-lines epoch log; defaults to `<stem>.log.jsonl` next to the checkpoint.
    #[arg(long)]
    pub log: Option<PathBuf>,
    /// Continue from `--ckpt` if it exists.
    #[arg(long)]
    pub resume: bool,
}

#[derive(Args, Debug)]
pub struct EvalArgs {
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long, required_unless_present = "persistence")]
    pub ckpt: Option<PathBuf>,
    /// Score the repeat-the-last-frame forecast instead of a checkpoint.
    #[arg(long, conflicts_with = "ckpt")]
    pub persistence: bool,
    #[arg(long, default_value_t = 30.0)]
    pub eccr_tau: f64,
}

#[derive(Args, Debug)]
pub struct PredictArgs {
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long)]
    pub ckpt: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    /// Comma-separated sample indices; all samples when omitted.
    #[arg(long, value_delimiter = ',')]
    pub indices: Option<Vec<usize>>,
}

#[derive(Args, Debug)]
pub struct RenderArgs {
    #[arg(long)]
    pub data: PathBuf,
    /// One prediction column per checkpoint, in the given order.
    #[arg(long, required_unless_present = "persistence")]
    pub ckpt: Vec<PathBuf>,
    /// Add a repeat-the-last-frame column after the checkpoints.
    #[arg(long)]
    pub persistence: bool,
    #[arg(long, value_delimiter = ',', default_value = "0")]
    pub indices: Vec<usize>,
    #[arg(long)]
    pub out: PathBuf,
}

fn parse_model(s: &str) -> Result<ModelKind, String> {
    s.parse::<ModelKind>().map_err(|e| e.to_string())
}

fn parse_loss(s: &str) -> Result<LossKind, String> {
    s.parse::<LossKind>().map_err(|e| e.to_string())
}

/// `NOWCAST_THREADS` caps the worker pool; unset or 0 lets rayon decide.
fn init_threads() -> anyhow::Result<()> {
    let n = match std::env::var("NOWCAST_THREADS") {
        Ok(v) => v
            .trim()
            .parse::<usize>()
            .map_err(|_| anyhow::anyhow!("NOWCAST_THREADS must be a non-negative integer, got `{v}`"))?,
        Err(_) => 0,
    };
    rayon::ThreadPoolBuilder::new().num_threads(n).build_global()?;
    Ok(())
}

fn run(cli: Cli) -> anyhow::Result<serde_json::Value> {
    init_threads()?;
    match cli.command {
        Command::GenMnistpp(a) => commands::gen_mnistpp(a),
        Command::PrepNephograms(a) => commands::prep_nephograms(a),
        Command::Train(a) => commands::train(a),
        Command::Eval(a) => commands::eval(a),
        Command::Predict(a) => commands::predict(a),
        Command::Render(a) => commands::render(a),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(v) => {
            println!("{v}");
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}
