//! Subcommand implementations.

pub mod ablate;
pub mod classify;
pub mod evaluate;
pub mod phantom;
pub mod synthesize;
pub mod train;

use std::path::Path;

use mcr_core::config::RunConfig;
use mcr_core::datamodel::pipeline;
use mcr_core::datamodel::{read_manifest, ManifestEntry, Modality, SlicePair, Volume};
use mcr_core::io::nifti::load_volume_with_meta;
use mcr_core::{Error, Result};

/// Resolve a manifest path relative to the manifest file's directory.
fn resolve(base: &Path, rel: &str) -> std::path::PathBuf {
    let p = Path::new(rel);
    if p.is_absolute() {
        p.to_path_buf()
    } else {
        base.parent().unwrap_or(Path::new(".")).join(p)
    }
}

pub struct SubjectVolumes {
    pub entry: ManifestEntry,
    pub mri: Volume,
    /// Missing when the manifest row has an empty pet_path or the file
    /// does not exist.
    pub pet: Option<Volume>,
}

/// Load all subjects of a manifest; offending files are reported together.
pub fn load_subjects(manifest_path: &Path, require_pet: bool) -> Result<Vec<SubjectVolumes>> {
    let entries = read_manifest(manifest_path)?;
    let mut out = Vec::new();
    let mut missing = Vec::new();
    for entry in entries {
        let mri_path = resolve(manifest_path, &entry.mri_path);
        let mri = load_volume_with_meta(&mri_path, &entry.subject_id, entry.diagnosis, Modality::Mri)?;
        let pet = if entry.pet_path.is_empty() {
            None
        } else {
            let pet_path = resolve(manifest_path, &entry.pet_path);
            if pet_path.exists() {
                Some(load_volume_with_meta(
                    &pet_path,
                    &entry.subject_id,
                    entry.diagnosis,
                    Modality::Pet,
                )?)
            } else {
                None
            }
        };
        if pet.is_none() {
            missing.push(entry.subject_id.clone());
        }
        out.push(SubjectVolumes { entry, mri, pet });
    }
    if require_pet && !missing.is_empty() {
        return Err(Error::Data(format!(
            "subjects without PET volumes: {}",
            missing.join(", ")
        )));
    }
    Ok(out)
}

/// Training slice pairs for a whole manifest (14 slices per subject).
pub fn training_dataset(cfg: &RunConfig, manifest_path: &Path) -> Result<Vec<SlicePair>> {
    let subjects = load_subjects(manifest_path, true)?;
    let mut pairs = Vec::new();
    for s in &subjects {
        pairs.extend(pipeline::training_pairs(
            &s.mri,
            s.pet.as_ref().unwrap(),
            cfg.model.image_size,
        )?);
    }
    Ok(pairs)
}

/// Desk-scale fallback dataset when no manifest is configured: deterministic
/// phantom slice pairs at the model's input size.
pub fn phantom_pair_dataset(cfg: &RunConfig, n_pairs: usize, tag: u64) -> Result<Vec<SlicePair>> {
    (0..n_pairs)
        .map(|i| {
            mcr_core::datamodel::make_phantom_pair(
                mcr_core::seeds::derive_seed_indexed(cfg.run.seed, &["phantom-pair"], &[tag, i as u64]),
                cfg.model.image_size,
            )
        })
        .collect()
}

/// Dataset selection shared by train/ablate: manifest when configured,
/// otherwise phantom pairs.
pub fn resolve_training_data(cfg: &RunConfig) -> Result<Vec<SlicePair>> {
    match &cfg.data.manifest {
        Some(m) => training_dataset(cfg, Path::new(m)),
        None => phantom_pair_dataset(cfg, 4, 0),
    }
}
