//! `ecgdx`: generate synthetic ECG photos, rectify them, train the mask
//! curriculum and segmenter, evaluate ensembles and draw heatmaps.
//!
//! Exit codes: 0 success, 1 runtime failure, 2 usage or config error.

mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, CommandFactory, FromArgMatches, Parser, Subcommand, ValueEnum};

use ecgdx_core::pipeline::ClassName;
use ecgdx_core::syngen::GenConfig;

use config::{defaults_json, PreprocessConfig, PseudoLabelFile, TrainFile};

#[derive(Debug, Parser)]
#[command(name = "ecgdx", version, about = "ECG photo classification pipeline")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Generate a synthetic dataset of ECG photos, masks and a manifest.
    Gen(GenArgs),
    /// Rectify every photo of a manifest and write an updated manifest.
    Preprocess(PreprocessArgs),
    /// Train a classifier stage or the trace segmenter.
    Train(TrainArgs),
    /// Evaluate one model or a logit ensemble.
    Eval(EvalArgs),
    /// Fit per-class F1-maximizing thresholds.
    FitThresholds(FitArgs),
    /// Draw an XGrad-CAM heatmap overlay for one photo and class.
    Explain(ExplainArgs),
    /// Split a manifest into train and validation manifests.
    Split(SplitArgs),
    /// Add segmenter-predicted masks to samples that have none.
    PseudoLabel(PseudoLabelArgs),
}

#[derive(Debug, Args)]
struct GenArgs {
    /// Number of samples (overrides the config).
    #[arg(long)]
    n: Option<usize>,
    /// Output directory.
    #[arg(long)]
    out: PathBuf,
    /// Generator seed (overrides the config).
    #[arg(long)]
    seed: Option<u64>,
    /// JSON generator config; see the defaults below.
    #[arg(long)]
    config: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct PreprocessArgs {
    #[arg(long)]
    manifest: PathBuf,
    /// Output directory for rectified photos and the new manifest.
    #[arg(long)]
    out: PathBuf,
    /// Also write grayscale, inverted copies (`<id>_gi.pgm`).
    #[arg(long)]
    emit_gray_inverted: bool,
    /// JSON preprocessing config; see the defaults below.
    #[arg(long)]
    config: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Stage {
    /// Classifier on trace masks (curriculum stage one).
    Masks,
    /// Classifier on grayscale, inverted photos (stage two, or fresh).
    Images,
    /// Trace segmenter.
    Seg,
}

#[derive(Debug, Args)]
struct TrainArgs {
    #[arg(long, value_enum)]
    stage: Stage,
    #[arg(long)]
    manifest: PathBuf,
    /// JSON training config; see the defaults below.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Initial weights; without them training starts from a seeded init.
    #[arg(long)]
    init: Option<PathBuf>,
    /// Output weight file. The log goes to `<out>.log.json`.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct EvalArgs {
    /// Comma-separated weight files; logits are averaged.
    #[arg(long, value_delimiter = ',', required = true)]
    weights: Vec<PathBuf>,
    #[arg(long)]
    manifest: PathBuf,
    /// Threshold file from `fit-thresholds`; 0.5 per class without one.
    #[arg(long)]
    thresholds: Option<PathBuf>,
    /// Output report.
    #[arg(long)]
    report: PathBuf,
}

#[derive(Debug, Args)]
struct FitArgs {
    #[arg(long, value_delimiter = ',', required = true)]
    weights: Vec<PathBuf>,
    #[arg(long)]
    manifest: PathBuf,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct ExplainArgs {
    #[arg(long)]
    weights: PathBuf,
    /// Photo (PPM/PGM); rectified first unless `--rectified`.
    #[arg(long)]
    image: PathBuf,
    /// One of MI, STTC, CD, HYP, AF.
    #[arg(long)]
    class: ClassName,
    /// Output overlay (PPM).
    #[arg(long)]
    out: PathBuf,
    /// Heatmap opacity in [0, 1].
    #[arg(long, default_value_t = 0.5)]
    alpha: f64,
    /// The image is already a rectified page.
    #[arg(long)]
    rectified: bool,
    /// Also write the raw heatmap as a PGM.
    #[arg(long)]
    heatmap: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct SplitArgs {
    #[arg(long)]
    manifest: PathBuf,
    #[arg(long, default_value_t = 0.9)]
    train_frac: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    train_out: PathBuf,
    #[arg(long)]
    val_out: PathBuf,
}

#[derive(Debug, Args)]
struct PseudoLabelArgs {
    /// Segmenter weights.
    #[arg(long)]
    weights: PathBuf,
    #[arg(long)]
    manifest: PathBuf,
    /// Output directory for predicted masks and the new manifest.
    #[arg(long)]
    out: PathBuf,
    /// JSON config; see the defaults below.
    #[arg(long)]
    config: Option<PathBuf>,
}

fn command() -> clap::Command {
    let defaults = |json: String| format!("Config defaults:\n{json}");
    Cli::command()
        .mut_subcommand("gen", |c| c.after_help(defaults(defaults_json::<GenConfig>())))
        .mut_subcommand("preprocess", |c| {
            c.after_help(defaults(defaults_json::<PreprocessConfig>()))
        })
        .mut_subcommand("train", |c| c.after_help(defaults(defaults_json::<TrainFile>())))
        .mut_subcommand("pseudo-label", |c| {
            c.after_help(defaults(defaults_json::<PseudoLabelFile>()))
        })
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info"))
        .format_timestamp(None)
        .init();
    let cli = match command()
        .try_get_matches()
        .and_then(|m| Cli::from_arg_matches(&m))
    {
        Ok(cli) => cli,
        // Help and version also arrive here, with exit code 0.
        Err(e) => e.exit(),
    };
    let result = match cli.command {
        Command::Gen(a) => commands::gen(a.n, &a.out, a.seed, a.config.as_deref()),
        Command::Preprocess(a) => {
            commands::preprocess(&a.manifest, &a.out, a.emit_gray_inverted, a.config.as_deref())
        }
        Command::Train(a) => commands::train(
            a.stage,
            &a.manifest,
            a.config.as_deref(),
            a.init.as_deref(),
            &a.out,
        ),
        Command::Eval(a) => {
            commands::eval(&a.weights, &a.manifest, a.thresholds.as_deref(), &a.report)
        }
        Command::FitThresholds(a) => commands::fit_thresholds(&a.weights, &a.manifest, &a.out),
        Command::Explain(a) => commands::explain(&commands::ExplainRequest {
            weights: &a.weights,
            image: &a.image,
            class: a.class,
            out: &a.out,
            alpha: a.alpha,
            rectified: a.rectified,
            heatmap: a.heatmap.as_deref(),
        }),
        Command::Split(a) => {
            commands::split(&a.manifest, a.train_frac, a.seed, &a.train_out, &a.val_out)
        }
        Command::PseudoLabel(a) => {
            commands::pseudo_label(&a.weights, &a.manifest, &a.out, a.config.as_deref())
        }
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
