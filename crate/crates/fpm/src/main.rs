//! Command-line surface for the face prediction pipeline.

use std::path::PathBuf;

use anyhow::Result;
use clap::{Parser, Subcommand};

use fpm::commands;
use fpm::config::PipelineConfig;
use fpm::evalmatch;

#[derive(Parser)]
#[command(name = "fpm", version, about = "Face aging prediction pipeline")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Scan a directory of face images and write a corpus manifest
    Ingest {
        /// Corpus directory with `<subject>A<age>.pgm` files
        root: PathBuf,
        /// Manifest file to write
        #[arg(long, default_value = "manifest.json")]
        out: PathBuf,
    },
    /// Fit the feature basis, train the predictor and write an artifact file
    Train {
        /// Corpus directory or manifest file
        corpus: PathBuf,
        /// Pipeline config file (JSON); defaults apply when omitted
        #[arg(long)]
        config: Option<PathBuf>,
        /// Override the config seed
        #[arg(long)]
        seed: Option<u64>,
        /// Artifact file to write
        #[arg(long, default_value = "artifact.json")]
        out: PathBuf,
    },
    /// Predict the next face image from a window of input images
    Predict {
        /// Trained artifact file
        artifact: PathBuf,
        /// Exactly `window_k` input images, oldest first
        images: Vec<PathBuf>,
        /// Predicted image to write (binary PGM)
        #[arg(long, default_value = "predicted.pgm")]
        out: PathBuf,
    },
    /// Leave-last-out evaluation over a corpus
    Evaluate {
        /// Corpus directory or manifest file
        corpus: PathBuf,
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
        /// Fine-tune on each held-out target before scoring it (the
        /// literal feedback protocol; leaks the target into training)
        #[arg(long)]
        refine_on_target: bool,
        /// Report base path; writes `<out>.json`, `<out>.txt`, `<out>_images/`
        #[arg(long, default_value = "report")]
        out: PathBuf,
    },
    /// Generate a synthetic aging corpus
    MakeFixture {
        out_dir: PathBuf,
        #[arg(long, default_value_t = 50)]
        subjects: usize,
        #[arg(long, default_value_t = 6)]
        length: usize,
        #[arg(long, default_value_t = 42)]
        seed: u64,
    },
}

fn load_config(path: Option<&PathBuf>, seed: Option<u64>) -> Result<PipelineConfig> {
    let mut cfg = match path {
        Some(p) => PipelineConfig::load(p)?,
        None => PipelineConfig::default(),
    };
    if let Some(s) = seed {
        cfg.seed = s;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn main() -> Result<()> {
    env_logger::init();
    let cli = Cli::parse();
    match cli.command {
        Command::Ingest { root, out } => {
            let summary = commands::cmd_ingest(&root, &out)?;
            println!(
                "ingested {} subjects, {} images -> {}",
                summary.subjects,
                summary.images,
                summary.manifest.display()
            );
            if !summary.skipped.is_empty() {
                println!(
                    "skipped {} non-record files: {}",
                    summary.skipped.len(),
                    summary.skipped.join(", ")
                );
            }
        }
        Command::Train {
            corpus,
            config,
            seed,
            out,
        } => {
            let cfg = load_config(config.as_ref(), seed)?;
            let summary = commands::cmd_train(&corpus, &cfg, &out)?;
            println!(
                "trained on {} subjects, {} images, {} pairs",
                summary.subjects, summary.images, summary.pairs
            );
            match &summary.report {
                Some(report) => println!(
                    "loss: initial {:.6e} -> final {:.6e} after {} epochs",
                    report.initial_loss, report.final_loss, report.epochs_run
                ),
                None => println!("degenerate corpus: basis has rank 0, no predictor trained"),
            }
            println!("artifact -> {}", summary.artifact.display());
        }
        Command::Predict {
            artifact,
            images,
            out,
        } => {
            let written = commands::cmd_predict(&artifact, &images, &out)?;
            println!("predicted image -> {}", written.display());
        }
        Command::Evaluate {
            corpus,
            config,
            seed,
            refine_on_target,
            out,
        } => {
            let mut cfg = load_config(config.as_ref(), seed)?;
            if refine_on_target {
                cfg.refine_on_target = true;
            }
            let summary = commands::cmd_evaluate(&corpus, &cfg, &out)?;
            print!("{}", evalmatch::format_text_report(&summary.report));
            println!(
                "report -> {} and {}",
                summary.json_path.display(),
                summary.text_path.display()
            );
        }
        Command::MakeFixture {
            out_dir,
            subjects,
            length,
            seed,
        } => {
            let summary = commands::cmd_make_fixture(&out_dir, subjects, length, seed)?;
            println!(
                "wrote {} images ({} subjects x {} ages) -> {}",
                summary.files,
                summary.subjects,
                summary.length,
                out_dir.display()
            );
        }
    }
    Ok(())
}
