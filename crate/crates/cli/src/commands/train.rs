//! GAN training command: resolves the dataset, runs the loop, appends the
//! JSON-lines log and writes checkpoints.

use std::io::Write;
use std::path::Path;

use mcr_core::config::RunConfig;
use mcr_core::trainer::GanTrainer;
use mcr_core::Result;

use crate::runcfg::{write_run_manifest, RunDir};

pub fn run(cfg: RunConfig, resume: Option<&Path>, force: bool) -> Result<()> {
    let dataset = super::resolve_training_data(&cfg)?;
    let dir = RunDir::create(Path::new(&cfg.run.out_dir), force || resume.is_some())?;
    write_run_manifest(&dir, "train", &cfg, cfg.data.manifest.as_deref().map(Path::new))?;

    let mut trainer = match resume {
        Some(ckpt) => GanTrainer::load_checkpoint_file(&cfg, ckpt)?,
        None => GanTrainer::new(&cfg)?,
    };
    let start_epoch = trainer.epoch;

    let log_path = dir.join("log.jsonl");
    let mut log_file = std::fs::OpenOptions::new()
        .create(true)
        .append(true)
        .open(&log_path)?;
    let ckpt_dir = dir.join("checkpoints");
    std::fs::create_dir_all(&ckpt_dir)?;

    let logs = trainer.train(&dataset, Some(&ckpt_dir), |log| {
        let line = serde_json::to_string(log).expect("log serializes");
        let _ = writeln!(log_file, "{line}");
        if log.epoch % 10 == 0 || log.epoch + 1 == cfg.train.epochs {
            eprintln!(
                "epoch {:>4} lr {:.3e} rec {:.4} adv {:.4} d {:.4} perplexity {:.1}",
                log.epoch, log.lr, log.rec, log.adv, log.loss_d, log.perplexity
            );
        }
    })?;

    let final_ckpt = ckpt_dir.join(format!("gan-epoch{:05}.ckpt", trainer.epoch));
    println!(
        "trained epochs {}..{} over {} slice pairs; final checkpoint {}",
        start_epoch,
        trainer.epoch,
        dataset.len(),
        final_ckpt.display()
    );
    if logs.is_empty() {
        println!("nothing to do: checkpoint already at configured epochs");
    }
    Ok(())
}
