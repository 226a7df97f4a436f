//! Phantom corpus generation: paired NIfTI volumes plus manifest.csv, with
//! diagnoses apportioned to the published cohort proportions.

use std::path::Path;

use mcr_core::datamodel::{phantom_diagnosis_counts, phantom_volume_pair, write_manifest, ManifestEntry};
use mcr_core::io::nifti::{write_nifti, write_sidecar};
use mcr_core::seeds;
use mcr_core::{Error, Result};

use crate::runcfg::RunDir;

pub fn run(
    subjects: usize,
    seed: u64,
    out: &Path,
    size: usize,
    depth: usize,
    manifest_only: bool,
    force: bool,
) -> Result<()> {
    if subjects == 0 {
        return Err(Error::Config("--subjects must be at least 1".into()));
    }
    let dir = RunDir::create(out, force)?;
    let counts = phantom_diagnosis_counts(subjects);

    let mut entries = Vec::with_capacity(subjects);
    let mut idx = 0usize;
    for (dx, n) in &counts {
        for _ in 0..*n {
            let subject_id = format!("phantom-{idx:04}");
            let mri_rel = format!("volumes/{subject_id}_mri.nii.gz");
            let pet_rel = format!("volumes/{subject_id}_pet.nii.gz");
            if !manifest_only {
                let subject_seed = seeds::derive_seed_indexed(seed, &["phantom-subject"], &[idx as u64]);
                let (mri, pet) = phantom_volume_pair(&subject_id, *dx, subject_seed, size, depth)?;
                let vol_dir = dir.join("volumes");
                std::fs::create_dir_all(&vol_dir)?;
                let mri_path = dir.join(&mri_rel);
                let pet_path = dir.join(&pet_rel);
                write_nifti(&mri_path, &mri.voxels)?;
                write_nifti(&pet_path, &pet.voxels)?;
                write_sidecar(&mri_path, &subject_id, *dx)?;
                write_sidecar(&pet_path, &subject_id, *dx)?;
            }
            entries.push(ManifestEntry {
                subject_id,
                diagnosis: *dx,
                mri_path: mri_rel,
                pet_path: pet_rel,
            });
            idx += 1;
        }
    }
    write_manifest(&dir.join("manifest.csv"), &entries)?;

    let summary: Vec<String> = counts
        .iter()
        .map(|(dx, n)| format!("{dx}={n}"))
        .collect();
    println!(
        "phantom corpus: {} subjects ({}) -> {}{}",
        subjects,
        summary.join(" "),
        out.display(),
        if manifest_only { " [manifest only]" } else { "" }
    );
    Ok(())
}
