//! Command-line driver: synthetic data, shape models, training, evaluation,
//! prediction, parameter sweeps and throughput benchmarks.

pub mod commands;
pub mod config;
pub mod staging;

use std::ffi::OsString;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};
use pdmnet_core::data_pipeline::Split;
use pdmnet_core::shape_model::Alignment;
use pdmnet_core::train_engine::{LossKind, NetPlan};

use config::RunConfig;

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 1;
pub const EXIT_DATA: i32 = 2;
pub const EXIT_RUNTIME: i32 = 3;

#[derive(Debug, Parser)]
#[command(name = "pdmnet", version, about = "Landmark regression through a PCA shape layer")]
pub struct Cli {
    #[command(flatten)]
    pub common: CommonArgs,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Default, Args)]
pub struct CommonArgs {
    /// TOML or JSON run configuration; flags override its values
    #[arg(long, global = true, value_name = "FILE")]
    pub config: Option<PathBuf>,
    /// Seed for every random stream of the run
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Run directory that receives all outputs
    #[arg(long, global = true, value_name = "DIR")]
    pub out: Option<PathBuf>,
    /// Dataset manifest (default: <out>/manifest.txt)
    #[arg(long, global = true, value_name = "FILE")]
    pub manifest: Option<PathBuf>,
    /// Shape model container (default: <out>/shape_model.json)
    #[arg(long, global = true, value_name = "FILE")]
    pub shape_model: Option<PathBuf>,
    /// Network checkpoint (default: <out>/best.json)
    #[arg(long, global = true, value_name = "FILE")]
    pub checkpoint: Option<PathBuf>,
    /// Number of shape parameters the network regresses
    #[arg(long, global = true, value_name = "P")]
    pub num_params: Option<usize>,
    /// Run every data-parallel loop on the calling thread
    #[arg(long, global = true)]
    pub sequential: bool,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a synthetic polygon corpus with a manifest
    Synth(SynthArgs),
    /// Align the training annotations and fit the shape model
    BuildShapes(BuildShapesArgs),
    /// Train a network against a fixed shape model
    Train(TrainArgs),
    /// Score a checkpoint with the normalized point-to-point error
    Evaluate(EvaluateArgs),
    /// Write landmark predictions for a split or a list of images
    Predict(PredictArgs),
    /// Train and evaluate one network per shape-parameter count
    Sweep(SweepArgs),
    /// Measure forward-pass throughput
    Benchmark(BenchmarkArgs),
}

impl Command {
    pub fn name(&self) -> &'static str {
        match self {
            Command::Synth(_) => "synth",
            Command::BuildShapes(_) => "build-shapes",
            Command::Train(_) => "train",
            Command::Evaluate(_) => "evaluate",
            Command::Predict(_) => "predict",
            Command::Sweep(_) => "sweep",
            Command::Benchmark(_) => "benchmark",
        }
    }
}

#[derive(Debug, Clone, Default, Args)]
pub struct SynthArgs {
    /// Number of samples to draw
    #[arg(long)]
    pub num_samples: Option<usize>,
    /// Side length of the square canvas in pixels
    #[arg(long)]
    pub image_size: Option<usize>,
    /// Polygon vertex count
    #[arg(long)]
    pub num_landmarks: Option<usize>,
    /// Trailing share of samples assigned to the test split
    #[arg(long)]
    pub test_fraction: Option<f64>,
}

#[derive(Debug, Clone, Default, Args)]
pub struct BuildShapesArgs {
    /// auto, none, procrustes, ibug68 or anchors:a,b/c,d
    #[arg(long)]
    pub alignment: Option<AlignmentArg>,
    /// Number of modes to keep
    #[arg(long)]
    pub num_modes: Option<usize>,
    /// Side length of the network input crop
    #[arg(long)]
    pub crop_size: Option<usize>,
}

/// Alignment flag value; the inner `None` stands for `auto`.
#[derive(Debug, Clone, PartialEq)]
pub struct AlignmentArg(pub Option<Alignment>);

impl std::str::FromStr for AlignmentArg {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        config::parse_alignment(s).map(AlignmentArg)
    }
}

#[derive(Debug, Clone, Default, Args)]
pub struct TrainArgs {
    /// Number of passes over the training set
    #[arg(long)]
    pub epochs: Option<usize>,
    /// Samples per gradient step
    #[arg(long)]
    pub batch_size: Option<usize>,
    /// ADAM step size
    #[arg(long)]
    pub learning_rate: Option<f64>,
    /// Point loss: l1 or mse
    #[arg(long)]
    pub loss: Option<LossKind>,
    /// Network plan: full or compact
    #[arg(long)]
    pub plan: Option<NetPlan>,
    /// Train on the unmodified crops
    #[arg(long)]
    pub no_augment: bool,
    /// Also save a checkpoint every N epochs
    #[arg(long, value_name = "N")]
    pub checkpoint_every: Option<usize>,
}

#[derive(Debug, Clone, Default, Args)]
pub struct EvaluateArgs {
    /// Manifest split to score: train or test
    #[arg(long)]
    pub split: Option<Split>,
    /// Bin count of the error histogram
    #[arg(long)]
    pub bins: Option<usize>,
}

#[derive(Debug, Clone, Default, Args)]
pub struct PredictArgs {
    /// Image files to predict on, resized whole to the crop size
    #[arg(long, num_args = 1.., value_name = "FILE")]
    pub images: Vec<PathBuf>,
    /// Manifest split to predict on when no images are given
    #[arg(long)]
    pub split: Option<Split>,
}

#[derive(Debug, Clone, Default, Args)]
pub struct SweepArgs {
    /// Comma-separated shape-parameter counts
    #[arg(long, value_delimiter = ',')]
    pub params: Option<Vec<usize>>,
    /// Epochs per sweep cell
    #[arg(long)]
    pub epochs: Option<usize>,
}

#[derive(Debug, Clone, Default, Args)]
pub struct BenchmarkArgs {
    /// Images per forward pass
    #[arg(long)]
    pub batch_size: Option<usize>,
    /// Timed batches
    #[arg(long)]
    pub iterations: Option<usize>,
    /// Untimed batches run first
    #[arg(long)]
    pub warmup: Option<usize>,
}

#[derive(Debug)]
pub enum CliError {
    Usage(String),
    Core(pdmnet_core::Error),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) | CliError::Core(pdmnet_core::Error::Config(_)) => EXIT_USAGE,
            CliError::Core(e) if e.is_data_error() => EXIT_DATA,
            CliError::Core(_) => EXIT_RUNTIME,
        }
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Usage(m) => write!(f, "usage error: {m}"),
            CliError::Core(e) => write!(f, "{e}"),
        }
    }
}

impl std::error::Error for CliError {}

impl From<pdmnet_core::Error> for CliError {
    fn from(e: pdmnet_core::Error) -> Self {
        CliError::Core(e)
    }
}

/// Defaults, then the config file, then flags.
pub fn resolve(cli: &Cli) -> Result<RunConfig, CliError> {
    let c = &cli.common;
    let mut cfg = match &c.config {
        Some(path) => RunConfig::load(path)?,
        None => RunConfig::default(),
    };
    if c.seed.is_some() {
        cfg.seed = c.seed;
    }
    if let Some(v) = &c.out {
        cfg.out = v.clone();
    }
    if let Some(v) = &c.manifest {
        cfg.manifest = Some(v.clone());
    }
    if let Some(v) = &c.shape_model {
        cfg.shape_model = Some(v.clone());
    }
    if let Some(v) = &c.checkpoint {
        cfg.checkpoint = Some(v.clone());
    }
    if let Some(v) = c.num_params {
        cfg.train.num_shape_params = v;
    }
    if c.sequential {
        cfg.exec = pdmnet_core::Exec::Sequential;
    }
    match &cli.command {
        Command::Synth(a) => {
            let s = &mut cfg.synth;
            set(&mut s.spec.num_samples, a.num_samples);
            set(&mut s.spec.image_size, a.image_size);
            set(&mut s.spec.num_landmarks, a.num_landmarks);
            set(&mut s.test_fraction, a.test_fraction);
        }
        Command::BuildShapes(a) => {
            if let Some(al) = &a.alignment {
                cfg.shapes.alignment = al.0.clone();
            }
            if a.num_modes.is_some() {
                cfg.shapes.num_modes = a.num_modes;
            }
            set(&mut cfg.crop.out_size, a.crop_size);
        }
        Command::Train(a) => {
            let t = &mut cfg.train;
            set(&mut t.epochs, a.epochs);
            set(&mut t.batch_size, a.batch_size);
            set(&mut t.adam.learning_rate, a.learning_rate);
            set(&mut t.loss, a.loss);
            set(&mut t.plan, a.plan);
            set(&mut t.checkpoint_every, a.checkpoint_every);
            if a.no_augment {
                t.augment = pdmnet_core::data_pipeline::AugmentConfig::none();
            }
        }
        Command::Evaluate(a) => {
            set(&mut cfg.evaluate.split, a.split);
            set(&mut cfg.evaluate.histogram_bins, a.bins);
        }
        Command::Predict(a) => set(&mut cfg.evaluate.split, a.split),
        Command::Sweep(a) => {
            if let Some(p) = &a.params {
                cfg.sweep.params = p.clone();
            }
            set(&mut cfg.train.epochs, a.epochs);
        }
        Command::Benchmark(a) => {
            let b = &mut cfg.benchmark;
            set(&mut b.batch_size, a.batch_size);
            set(&mut b.iterations, a.iterations);
            set(&mut b.warmup, a.warmup);
        }
    }
    cfg.propagate();
    Ok(cfg)
}

fn set<T>(slot: &mut T, value: Option<T>) {
    if let Some(v) = value {
        *slot = v;
    }
}

/// Parses `args`, runs the subcommand and returns the process exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
        }
    };
    match resolve(&cli).and_then(|cfg| commands::run(&cli.command, &cfg, cli.common.config.as_deref())) {
        Ok(()) => EXIT_OK,
        Err(e) => {
            eprintln!("pdmnet {}: {e}", cli.command.name());
            e.exit_code()
        }
    }
}
