//! Slice translation: run a trained generator over a manifest's MRI slices,
//! writing synthetic PET slices and (where real PET exists) difference maps
//! under `{subject_id}/{slice_index}.png`.

use std::path::Path;

use mcr_core::config::RunConfig;
use mcr_core::datamodel::pipeline;
use mcr_core::io::png::write_gray_png;
use mcr_core::metrics::{render_difference_map, to_unit_range};
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
    let subjects = super::load_subjects(manifest, false)?;
    let dir = RunDir::create(out, force)?;
    write_run_manifest(&dir, "synthesize", &cfg, Some(manifest))?;

    let mut n_slices = 0usize;
    let mut n_diffs = 0usize;
    for s in &subjects {
        let slices = pipeline::eval_slices(
            &s.mri,
            s.pet.as_ref(),
            cfg.eval.slice_set,
            cfg.model.image_size,
        )?;
        if s.pet.is_none() {
            eprintln!(
                "warning: no PET volume for {}; writing synthetic slices without difference maps",
                s.entry.subject_id
            );
        }
        let subj_dir = dir.join(&s.entry.subject_id);
        std::fs::create_dir_all(&subj_dir)?;
        for slice in &slices {
            let pet_hat = trainer.synthesize(&slice.mri)?;
            write_gray_png(
                &subj_dir.join(format!("{}_synth.png", slice.slice_index)),
                &to_unit_range(&pet_hat),
            )?;
            n_slices += 1;
            if let Some(pet) = &slice.pet {
                render_difference_map(
                    &slice.mri,
                    pet,
                    &pet_hat,
                    &subj_dir.join(format!("{}.png", slice.slice_index)),
                    Some(&subj_dir.join(format!("{}_panel.png", slice.slice_index))),
                )?;
                n_diffs += 1;
            }
        }
    }
    println!(
        "synthesized {} slices for {} subjects ({} difference maps) -> {}",
        n_slices,
        subjects.len(),
        n_diffs,
        out.display()
    );
    Ok(())
}
