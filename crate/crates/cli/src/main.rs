//! Pipeline driver: deterministic, config-driven commands over the library.
//!
//! Exit codes: 0 success, 1 internal error, 2 input/config error.

mod commands;
mod config;
mod dataio;
mod report;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};

use config::{PipelineConfig, Preset};
use emofuse::error::Error;

#[derive(Parser)]
#[command(
    name = "emofuse",
    about = "Multimodal emotion-recognition pipeline: expert training, aggregation, and late fusion"
)]
struct Cli {
    /// JSON configuration file; flags override its fields.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Global random seed (mandatory, here or in the config).
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker thread cap; results are identical for any value.
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Named parameter preset.
    #[arg(long, global = true, value_enum)]
    preset: Option<Preset>,
    /// Output directory.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ExpertKind {
    Audio,
    Mouth,
    Motion,
    /// RBF SVM over 70-dim video descriptors.
    SvmOnDescriptors,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum FuseStrategy {
    Mean,
    SubsetMean,
    SvmStack,
    Search,
    SearchSwapped,
    Bag,
}

#[derive(Subcommand)]
enum Command {
    /// Smooth, square, and stabilize facetube CSVs.
    SmoothTubes {
        /// Moving-average window override.
        #[arg(long)]
        window: Option<usize>,
    },
    /// Aggregate per-frame probabilities into 70-dim video descriptors.
    Aggregate,
    /// Train one modality expert and emit its predictions.
    TrainExpert {
        #[arg(long, value_enum)]
        expert: ExpertKind,
    },
    /// Combine expert predictions.
    Fuse {
        #[arg(long, value_enum)]
        strategy: FuseStrategy,
    },
    /// Evaluate a prediction file: accuracy and confusion matrices.
    Eval {
        /// Prediction CSV (overrides config data.predictions).
        #[arg(long)]
        predictions: Option<PathBuf>,
        /// Labels CSV supplying gold (overrides config data.labels).
        #[arg(long)]
        gold: Option<PathBuf>,
    },
    /// Generate the seeded synthetic fixture tree (labels, tubes, frames,
    /// features, expert predictions) plus a ready-to-use config.
    GenSynth {
        /// Number of clips.
        #[arg(long, default_value_t = 56)]
        clips: usize,
        /// Face frames per clip.
        #[arg(long, default_value_t = 3)]
        face_frames: usize,
        /// Video frames per clip.
        #[arg(long, default_value_t = 16)]
        video_frames: usize,
        /// Video frame side in pixels.
        #[arg(long, default_value_t = 30)]
        video_size: usize,
        /// Audio feature dimension.
        #[arg(long, default_value_t = 8)]
        audio_dim: usize,
    },
}

fn is_input_error(err: &Error) -> bool {
    !matches!(err, Error::Training(_))
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();

    let mut cfg = match &cli.config {
        Some(path) => match PipelineConfig::load(path) {
            Ok(c) => c,
            Err(e) => {
                eprintln!("error: {e}");
                return ExitCode::from(2);
            }
        },
        None => PipelineConfig::default(),
    };
    if cli.seed.is_some() {
        cfg.seed = cli.seed;
    }
    if cli.threads.is_some() {
        cfg.threads = cli.threads;
    }
    if cli.preset.is_some() {
        cfg.preset = cli.preset;
    }
    if cli.out.is_some() {
        cfg.out = cli.out.clone();
    }

    let resolved = match cfg.resolve() {
        Ok(r) => r,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(2);
        }
    };
    if let Some(n) = cfg.threads.filter(|&n| n > 0) {
        // Parallel sections collect in index order, so N does not affect
        // any output bytes.
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            eprintln!("error: cannot build thread pool: {e}");
            return ExitCode::from(1);
        }
    }
    if let Err(e) = std::fs::create_dir_all(&resolved.out) {
        eprintln!("error: cannot create output directory: {e}");
        return ExitCode::from(2);
    }

    let started = std::time::Instant::now();
    let result = match &cli.command {
        Command::SmoothTubes { window } => commands::smooth_tubes::run(&resolved, *window, started),
        Command::Aggregate => commands::aggregate::run(&resolved, started),
        Command::TrainExpert { expert } => commands::train_expert::run(&resolved, *expert, started),
        Command::Fuse { strategy } => commands::fuse::run(&resolved, *strategy, started),
        Command::Eval { predictions, gold } => {
            commands::eval::run(&resolved, predictions.as_deref(), gold.as_deref(), started)
        }
        Command::GenSynth {
            clips,
            face_frames,
            video_frames,
            video_size,
            audio_dim,
        } => commands::gen_synth::run(
            &resolved,
            commands::gen_synth::SynthSizes {
                clips: *clips,
                face_frames: *face_frames,
                video_frames: *video_frames,
                video_size: *video_size,
                audio_dim: *audio_dim,
            },
            started,
        ),
    };

    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            let marker = resolved.out.join(".failed");
            let _ = std::fs::write(&marker, format!("{e}\n"));
            if is_input_error(&e) {
                ExitCode::from(2)
            } else {
                ExitCode::from(1)
            }
        }
    }
}
