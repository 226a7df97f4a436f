//! Synthesis-quality evaluation over a manifest: per-slice CSV plus a
//! schema-versioned JSON report with ALL/CN/MCI/AD aggregates.

use std::path::Path;

use mcr_core::config::RunConfig;
use mcr_core::datamodel::pipeline;
use mcr_core::metrics::{evaluate_synthesis, EvalSlice};
use mcr_core::trainer::GanTrainer;
use mcr_core::Result;

use crate::runcfg::{write_run_manifest, RunDir};

pub fn run(
    cfg: RunConfig,
    checkpoint: &Path,
    manifest: &Path,
    out: &Path,
    force: bool,
) -> Result<()> {
    let trainer = GanTrainer::load_checkpoint_file(&cfg, checkpoint)?;
    let subjects = super::load_subjects(manifest, true)?;
    let dir = RunDir::create(out, force)?;
    write_run_manifest(&dir, "evaluate", &cfg, Some(manifest))?;

    let mut slices: Vec<EvalSlice> = Vec::new();
    for s in &subjects {
        slices.extend(pipeline::eval_slices(
            &s.mri,
            s.pet.as_ref(),
            cfg.eval.slice_set,
            cfg.model.image_size,
        )?);
    }
    let mut generate = |mri: &ndarray::Array2<f64>| trainer.synthesize(mri);
    let report = evaluate_synthesis(&mut generate, &slices)?;
    report.write_csv(&dir.join("slices.csv"))?;
    report.write_json(&dir.join("report.json"))?;

    for g in &report.aggregates {
        println!(
            "{:<4} n={:<5} mse {:.4} ± {:.4}  psnr {:.2} ± {:.2} dB  ssim {:.4} ± {:.4}",
            g.group, g.n_slices, g.mse.mean, g.mse.std, g.psnr_db.mean, g.psnr_db.std,
            g.ssim.mean, g.ssim.std
        );
    }
    println!("report -> {}", dir.join("report.json").display());
    Ok(())
}
