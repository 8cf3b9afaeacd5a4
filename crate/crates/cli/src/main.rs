//! `sixdgs`: synthetic scenes, rendering, scorer training and single-image
//! pose estimation for 3D Gaussian Splatting models.

mod cache;
mod commands;
mod report;
mod svg;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use sixdgs_core::Error;

#[derive(Parser, Debug)]
#[command(name = "sixdgs", version, about = "Camera pose estimation from a 3D Gaussian Splatting model")]
struct Cli {
    /// Worker threads (defaults to all cores).
    #[arg(long, global = true, env = "SIXDGS_THREADS")]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Generate a seeded synthetic scene with ground-truth cameras.
    Synth(SynthArgs),
    /// Render one view of a model.
    Render(RenderArgs),
    /// Dump the radiant rays of a model.
    Rays(RaysArgs),
    /// Train the ray scorer on posed feature maps.
    Train(TrainArgs),
    /// Estimate the camera pose of one feature map.
    Estimate(EstimateArgs),
    /// Estimate every view of a split and report errors against ground truth.
    Eval(EvalArgs),
}

#[derive(Args, Debug, Clone)]
pub struct SynthArgs {
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 500)]
    pub ellipsoids: usize,
    #[arg(long, default_value_t = 12)]
    pub views: usize,
    /// Views written to the test split instead of the training split.
    #[arg(long, default_value_t = 0)]
    pub holdout: usize,
    /// `shell` or `box-cluster`.
    #[arg(long, default_value = "shell")]
    pub layout: String,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = 128)]
    pub image_size: u32,
    #[arg(long, default_value_t = 60.0)]
    pub fov: f64,
    #[arg(long, default_value_t = 1.25)]
    pub camera_distance: f64,
    #[arg(long, default_value_t = 8)]
    pub feature_stride: usize,
}

#[derive(Args, Debug, Clone)]
pub struct ModelArgs {
    /// 3DGS model in binary PLY form.
    #[arg(long)]
    pub model: PathBuf,
    /// Target cells per ellipsoid.
    #[arg(long = "g-cells", default_value_t = 100)]
    pub g_cells: usize,
}

#[derive(Args, Debug, Clone)]
pub struct RenderArgs {
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long)]
    pub transforms: PathBuf,
    #[arg(long, default_value_t = 0)]
    pub view: usize,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args, Debug, Clone)]
pub struct RaysArgs {
    #[command(flatten)]
    pub model: ModelArgs,
    #[arg(long)]
    pub out: PathBuf,
    /// Also write a CSV copy.
    #[arg(long)]
    pub csv: bool,
}

#[derive(Args, Debug, Clone)]
pub struct TrainArgs {
    #[command(flatten)]
    pub model: ModelArgs,
    #[arg(long)]
    pub transforms: PathBuf,
    /// Directory of feature files overriding the per-frame paths.
    #[arg(long)]
    pub features: Option<PathBuf>,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 1500)]
    pub iters: usize,
    #[arg(long, default_value_t = 2000)]
    pub subsample: usize,
    #[arg(long = "mlp-width", default_value_t = 512)]
    pub mlp_width: usize,
    #[arg(long, default_value_t = 0.1)]
    pub lambda: f64,
    #[arg(long, default_value_t = 1e-3)]
    pub lr: f64,
    #[arg(long, default_value_t = 1e-3)]
    pub weight_decay: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

#[derive(Args, Debug, Clone)]
pub struct ScorerArgs {
    /// Trained weights; their directory also holds the ray cache.
    #[arg(long, conflicts_with = "oracle")]
    pub weights: Option<PathBuf>,
    /// Score rays with the ground-truth camera instead of trained weights.
    #[arg(long)]
    pub oracle: bool,
    #[arg(long = "n-top", default_value_t = 100)]
    pub n_top: usize,
    /// Distance bandwidth of the oracle scores.
    #[arg(long, default_value_t = 0.1)]
    pub lambda: f64,
}

#[derive(Args, Debug, Clone)]
pub struct EstimateArgs {
    #[command(flatten)]
    pub model: ModelArgs,
    #[command(flatten)]
    pub scorer: ScorerArgs,
    /// Feature file of the query image.
    #[arg(long)]
    pub features: PathBuf,
    /// Camera file supplying intrinsics and, with --view, ground truth.
    #[arg(long)]
    pub transforms: PathBuf,
    #[arg(long)]
    pub view: Option<usize>,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

#[derive(Args, Debug, Clone)]
pub struct EvalArgs {
    #[command(flatten)]
    pub model: ModelArgs,
    #[command(flatten)]
    pub scorer: ScorerArgs,
    /// Test split.
    #[arg(long)]
    pub transforms: PathBuf,
    #[arg(long)]
    pub features: Option<PathBuf>,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

const EXIT_BAD_INPUT: u8 = 2;
const EXIT_GEOMETRY: u8 = 3;
const EXIT_TRAINING: u8 = 4;

fn exit_code(err: &anyhow::Error) -> u8 {
    match err.downcast_ref::<Error>() {
        Some(Error::Diverged { .. }) => EXIT_TRAINING,
        Some(e) if e.is_geometric() => EXIT_GEOMETRY,
        _ => EXIT_BAD_INPUT,
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    if let Some(n) = cli.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            log::warn!("could not size the thread pool: {e}");
        }
    }
    let result = match &cli.command {
        Command::Synth(a) => commands::synth(a),
        Command::Render(a) => commands::render(a),
        Command::Rays(a) => commands::rays(a),
        Command::Train(a) => commands::train(a),
        Command::Estimate(a) => commands::estimate(a),
        Command::Eval(a) => commands::eval(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let code = exit_code(&e);
            eprintln!("error: {e:#}");
            eprintln!("exit-code: {code}");
            ExitCode::from(code)
        }
    }
}
