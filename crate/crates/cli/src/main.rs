//! `mcrvqgan`: phantom corpus generation, GAN and classifier training,
//! synthesis, evaluation and the ablation matrix.
//!
//! Exit codes: 0 success, 2 config error, 3 data error, 4 training
//! divergence, 5 I/O error.

mod commands;
mod runcfg;

use clap::{Parser, Subcommand};
use std::path::PathBuf;

fn default_config_listing() -> String {
    format!(
        "CONFIG KEYS (defaults shown; override with --set KEY=VALUE, precedence flag > file > default):\n\n{}",
        mcr_core::config::RunConfig::default().to_toml()
    )
}

#[derive(Parser)]
#[command(
    name = "mcrvqgan",
    about = "Cross-modality MRI-to-PET slice synthesis: training, evaluation and phantom tooling",
    after_long_help = default_config_listing()
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(clap::Args, Clone)]
struct ConfigArgs {
    /// Run configuration file (TOML). Defaults apply when omitted.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Dotted-key override, repeatable: --set train.epochs=3
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
    /// Root seed override (shorthand for --set run.seed=...).
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory override (shorthand for --set run.out_dir=...).
    #[arg(long)]
    out_dir: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a deterministic synthetic phantom corpus with a manifest.
    Phantom {
        /// Number of subjects; diagnoses follow the published cohort proportions.
        #[arg(long, short = 'n')]
        subjects: usize,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        /// Output directory for volumes and manifest.csv.
        #[arg(long)]
        out: PathBuf,
        /// In-plane size of phantom volumes (>= 32).
        #[arg(long, default_value_t = 64)]
        size: usize,
        /// Axial depth (>= 177 so the central slice band exists).
        #[arg(long, default_value_t = 192)]
        depth: usize,
        /// Write only the manifest (no volume files).
        #[arg(long)]
        manifest_only: bool,
        /// Overwrite an existing output directory.
        #[arg(long)]
        force: bool,
    },
    /// Train the generator-discriminator pair.
    Train {
        #[command(flatten)]
        cfg: ConfigArgs,
        /// Resume from a checkpoint.
        #[arg(long)]
        resume: Option<PathBuf>,
        #[arg(long)]
        force: bool,
    },
    /// Translate MRI slices into synthetic PET slices with a trained model.
    Synthesize {
        #[command(flatten)]
        cfg: ConfigArgs,
        #[arg(long)]
        checkpoint: PathBuf,
        /// Manifest of subjects to translate.
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        force: bool,
    },
    /// Evaluate synthesis quality (MSE / PSNR / SSIM per slice and group).
    Evaluate {
        #[command(flatten)]
        cfg: ConfigArgs,
        #[arg(long)]
        checkpoint: PathBuf,
        /// Manifest of evaluation subjects (typically the test split).
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        force: bool,
    },
    /// Train and evaluate the four ablation variants under one seed.
    Ablate {
        #[command(flatten)]
        cfg: ConfigArgs,
        #[arg(long)]
        force: bool,
    },
    /// Train the diagnosis classifier on real PET slices.
    ClassifyTrain {
        #[command(flatten)]
        cfg: ConfigArgs,
        /// Manifest with training subjects.
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long)]
        force: bool,
    },
    /// Evaluate the classifier on real and synthetic PET.
    ClassifyEval {
        #[command(flatten)]
        cfg: ConfigArgs,
        /// Classifier checkpoint.
        #[arg(long)]
        classifier: PathBuf,
        /// Generator checkpoint used for the synthetic source.
        #[arg(long)]
        generator: PathBuf,
        /// Manifest of evaluation subjects.
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        force: bool,
    },
}

fn main() {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Phantom {
            subjects,
            seed,
            out,
            size,
            depth,
            manifest_only,
            force,
        } => commands::phantom::run(subjects, seed, &out, size, depth, manifest_only, force),
        Command::Train { cfg, resume, force } => {
            runcfg::load(&cfg).and_then(|c| commands::train::run(c, resume.as_deref(), force))
        }
        Command::Synthesize {
            cfg,
            checkpoint,
            manifest,
            out,
            force,
        } => runcfg::load(&cfg)
            .and_then(|c| commands::synthesize::run(c, &checkpoint, &manifest, &out, force)),
        Command::Evaluate {
            cfg,
            checkpoint,
            manifest,
            out,
            force,
        } => runcfg::load(&cfg)
            .and_then(|c| commands::evaluate::run(c, &checkpoint, &manifest, &out, force)),
        Command::Ablate { cfg, force } => {
            runcfg::load(&cfg).and_then(|c| commands::ablate::run(c, force))
        }
        Command::ClassifyTrain { cfg, manifest, force } => {
            runcfg::load(&cfg).and_then(|c| commands::classify::train(c, &manifest, force))
        }
        Command::ClassifyEval {
            cfg,
            classifier,
            generator,
            manifest,
            out,
            force,
        } => runcfg::load(&cfg).and_then(|c| {
            commands::classify::eval(c, &classifier, &generator, &manifest, &out, force)
        }),
    };
    match result {
        Ok(()) => {}
        Err(e) => {
            eprintln!("error: {e}");
            std::process::exit(e.exit_code());
        }
    }
}
