//! garb: command-line front end for the garment detection pipeline.
//!
//! Exit codes: 0 on success, 1 on data errors (bad annotations, manifests,
//! images, flags), 2 on backend or environment errors (unavailable models,
//! failing backends, io).

mod commands;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

#[derive(Debug)]
pub enum CliError {
    /// Bad input data: exit code 1.
    Data(String),
    /// Backend or environment failure: exit code 2.
    Env(String),
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Data(m) | CliError::Env(m) => f.write_str(m),
        }
    }
}

pub fn data_err(e: impl std::fmt::Display) -> CliError {
    CliError::Data(e.to_string())
}

pub fn env_err(e: impl std::fmt::Display) -> CliError {
    CliError::Env(e.to_string())
}

#[derive(Parser)]
#[command(
    name = "garb",
    version,
    about = "Detect top and bottom garments in fashion images"
)]
struct Cli {
    /// JSON config file (pipeline/classifier/segmenter/fg_backend sections).
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Seed for splits, training, and noise.
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Convert a directory of LabelMe JSON files into a dataset manifest.
    Convert {
        /// Directory holding LabelMe *.json documents.
        #[arg(long)]
        input_dir: PathBuf,
        /// Manifest file to write.
        #[arg(long)]
        out: PathBuf,
    },
    /// Assign train/validation/test split tags in a manifest.
    Split {
        #[arg(long)]
        manifest: PathBuf,
        /// Comma-separated train,validation,test fractions.
        #[arg(long, default_value = "0.75,0.10,0.15")]
        fractions: String,
        /// Output manifest; defaults to rewriting in place.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Remove backgrounds, flag destroyed images, write cleaned copies.
    Preprocess {
        #[arg(long)]
        manifest: PathBuf,
        /// Foreground backend spec (e.g. mock:all-ones, mock:centered-rect:0.4).
        #[arg(long)]
        backend: Option<String>,
        /// Destroyed-image threshold on the foreground fraction.
        #[arg(long)]
        tau: Option<f64>,
        /// Background fill as r,g,b.
        #[arg(long)]
        fill: Option<String>,
        #[arg(long)]
        out_dir: PathBuf,
    },
    /// Apply an augmentation plan to every manifest image.
    Augment {
        #[arg(long)]
        manifest: PathBuf,
        /// JSON plan file: {"ops":[{"op":"rotate","angle_deg":45.0},...]}.
        #[arg(long)]
        plan: PathBuf,
        #[arg(long)]
        out_dir: PathBuf,
        /// Suffix appended to augmented image ids.
        #[arg(long, default_value = "aug")]
        suffix: String,
    },
    /// Train the routing classifier on a directory of per-class folders.
    TrainClassifier {
        /// Directory with one subdirectory per class label.
        #[arg(long)]
        data_dir: PathBuf,
        /// Model artifact directory to write.
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        epochs: Option<usize>,
        #[arg(long)]
        learning_rate: Option<f64>,
        #[arg(long)]
        batch_size: Option<usize>,
        /// 4 or 5.
        #[arg(long)]
        num_classes: Option<usize>,
        /// ResNet50, VGG16, or InceptionV3.
        #[arg(long)]
        backbone: Option<String>,
    },
    /// Train the instance segmenter from manifest polygons.
    TrainSegmenter {
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Which split to train on: train, validation, test, or all.
        #[arg(long, default_value = "train")]
        split: String,
        #[arg(long)]
        epochs_heads: Option<usize>,
        #[arg(long)]
        epochs_all: Option<usize>,
        #[arg(long)]
        lr_heads: Option<f64>,
        #[arg(long)]
        lr_all: Option<f64>,
    },
    /// Classify a labeled directory and print the classification report.
    ClassifyEval {
        /// Model artifact directory or mock:<label>[:<score>].
        #[arg(long)]
        model: String,
        #[arg(long)]
        data_dir: PathBuf,
        /// Also write the report as JSON.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Evaluate detections against manifest ground truth as a mAP table.
    SegmentEval {
        #[arg(long)]
        manifest: PathBuf,
        /// Model artifact directory or mock spec; mutually exclusive with --dets.
        #[arg(long)]
        model: Option<String>,
        /// Pre-computed detections interchange file.
        #[arg(long)]
        dets: Option<PathBuf>,
        /// Which split to evaluate: train, validation, test, or all.
        #[arg(long, default_value = "test")]
        split: String,
        /// IoU flavor driving the matching.
        #[arg(long, value_parser = ["mask", "box"], default_value = "mask")]
        iou_kind: String,
        /// Comma-separated ascending IoU thresholds.
        #[arg(long, default_value = "0.5,0.6,0.7,0.8,0.9")]
        thresholds: String,
        /// Also write the result as JSON.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run the full pipeline on one image or a whole manifest.
    Run {
        /// Single input image.
        #[arg(long, conflicts_with = "manifest")]
        image: Option<PathBuf>,
        /// Dataset manifest to run as a batch.
        #[arg(long)]
        manifest: Option<PathBuf>,
        /// Classifier spec: model dir or mock:<label>[:<score>].
        #[arg(long)]
        classifier: String,
        /// Segmenter spec: model dir, mock:empty, or mock:halves[:s1[:s2]].
        #[arg(long)]
        segmenter: String,
        /// Foreground backend spec; defaults to the config file's backend.
        #[arg(long)]
        fg: Option<String>,
        /// Also render overlay PNGs.
        #[arg(long)]
        overlay: bool,
        #[arg(long)]
        out_dir: PathBuf,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let app_config = match commands::load_app_config(cli.config.as_deref()) {
        Ok(cfg) => cfg,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(1);
        }
    };
    let result = match cli.command {
        Command::Convert { input_dir, out } => commands::convert(&input_dir, &out),
        Command::Split {
            manifest,
            fractions,
            out,
        } => commands::split(&manifest, &fractions, cli.seed, out.as_deref()),
        Command::Preprocess {
            manifest,
            backend,
            tau,
            fill,
            out_dir,
        } => commands::preprocess_cmd(
            &manifest,
            backend.as_deref(),
            tau,
            fill.as_deref(),
            &out_dir,
            &app_config,
        ),
        Command::Augment {
            manifest,
            plan,
            out_dir,
            suffix,
        } => commands::augment_cmd(&manifest, &plan, &out_dir, &suffix),
        Command::TrainClassifier {
            data_dir,
            out,
            epochs,
            learning_rate,
            batch_size,
            num_classes,
            backbone,
        } => commands::train_classifier_cmd(
            &data_dir,
            &out,
            &app_config,
            commands::ClassifierOverrides {
                epochs,
                learning_rate,
                batch_size,
                num_classes,
                backbone,
            },
            cli.seed,
        ),
        Command::TrainSegmenter {
            manifest,
            out,
            split,
            epochs_heads,
            epochs_all,
            lr_heads,
            lr_all,
        } => commands::train_segmenter_cmd(
            &manifest,
            &out,
            &split,
            &app_config,
            commands::SegmenterOverrides {
                epochs_heads,
                epochs_all,
                lr_heads,
                lr_all,
            },
            cli.seed,
        ),
        Command::ClassifyEval {
            model,
            data_dir,
            out,
        } => commands::classify_eval(&model, &data_dir, out.as_deref()),
        Command::SegmentEval {
            manifest,
            model,
            dets,
            split,
            iou_kind,
            thresholds,
            out,
        } => commands::segment_eval(
            &manifest,
            model.as_deref(),
            dets.as_deref(),
            &split,
            &iou_kind,
            &thresholds,
            out.as_deref(),
        ),
        Command::Run {
            image,
            manifest,
            classifier,
            segmenter,
            fg,
            overlay,
            out_dir,
        } => commands::run_cmd(
            image.as_deref(),
            manifest.as_deref(),
            &classifier,
            &segmenter,
            fg.as_deref(),
            overlay,
            &out_dir,
            &app_config,
        ),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(CliError::Data(m)) => {
            eprintln!("error: {m}");
            ExitCode::from(1)
        }
        Err(CliError::Env(m)) => {
            eprintln!("error: {m}");
            ExitCode::from(2)
        }
    }
}
