//! Volume-to-slice pipelines: per-volume robust normalization, padding and
//! slice selection wired together for training, evaluation and
//! classification datasets.

use ndarray::Array2;

use crate::config::SliceSet;
use crate::error::{Error, Result};
use crate::metrics::EvalSlice;
use crate::trainer::LabeledSlice;

use super::slices::{
    normalize_intensity, pad_axial_slice, robust_bounds, select_classifier_slices,
    select_training_slices,
};
use super::{SlicePair, Volume};

/// Normalize a whole volume with its robust bounds, then pad each slice to
/// `target` x `target`.
fn prepared_slice(vol: &Volume, bounds: (f64, f64), index: usize, target: usize) -> Result<Array2<f64>> {
    let raw = vol.slice(index)?;
    let normed = normalize_intensity(&raw, bounds.0, bounds.1)?;
    pad_axial_slice(&normed, target)
}

fn volume_bounds(vol: &Volume) -> Result<(f64, f64)> {
    let values: Vec<f64> = vol.voxels.iter().cloned().collect();
    robust_bounds(&values)
}

/// The 14 training slice pairs of one subject.
pub fn training_pairs(mri: &Volume, pet: &Volume, target: usize) -> Result<Vec<SlicePair>> {
    check_paired(mri, pet)?;
    let mb = volume_bounds(mri)?;
    let pb = volume_bounds(pet)?;
    let mut out = Vec::new();
    for idx in select_training_slices(mri.depth())? {
        out.push(SlicePair {
            mri: prepared_slice(mri, mb, idx, target)?,
            pet: prepared_slice(pet, pb, idx, target)?,
            slice_index: idx,
            subject_id: mri.subject_id.clone(),
            diagnosis: mri.diagnosis,
        });
    }
    Ok(out)
}

/// Evaluation slices of one subject; PET is optional (difference maps are
/// skipped when it is absent).
pub fn eval_slices(
    mri: &Volume,
    pet: Option<&Volume>,
    slice_set: SliceSet,
    target: usize,
) -> Result<Vec<EvalSlice>> {
    if let Some(p) = pet {
        check_paired(mri, p)?;
    }
    let mb = volume_bounds(mri)?;
    let pb = pet.map(volume_bounds).transpose()?;
    let indices = match slice_set {
        SliceSet::Central100 => (super::slices::CENTRAL_LO..=super::slices::CENTRAL_HI).collect::<Vec<_>>(),
        SliceSet::Train14 => select_training_slices(mri.depth())?,
    };
    if mri.depth() <= *indices.last().unwrap() {
        return Err(Error::Range(format!(
            "volume depth {} too shallow for the evaluation slice set",
            mri.depth()
        )));
    }
    let mut out = Vec::new();
    for idx in indices {
        out.push(EvalSlice {
            subject_id: mri.subject_id.clone(),
            diagnosis: mri.diagnosis,
            slice_index: idx,
            mri: prepared_slice(mri, mb, idx, target)?,
            pet: match (pet, pb) {
                (Some(p), Some(b)) => Some(prepared_slice(p, b, idx, target)?),
                _ => None,
            },
        });
    }
    Ok(out)
}

/// Labeled classifier slices of one subject's PET volume, sampled per the
/// class-imbalance rule (every other slice for the CN group).
pub fn classifier_slices(pet: &Volume, target: usize) -> Result<Vec<LabeledSlice>> {
    let bounds = volume_bounds(pet)?;
    let label = pet.diagnosis.class_label();
    let mut out = Vec::new();
    for idx in select_classifier_slices(pet.depth(), pet.diagnosis)? {
        out.push(LabeledSlice {
            image: prepared_slice(pet, bounds, idx, target)?,
            label,
        });
    }
    Ok(out)
}

fn check_paired(mri: &Volume, pet: &Volume) -> Result<()> {
    if mri.subject_id != pet.subject_id {
        return Err(Error::Data(format!(
            "paired volumes from different subjects: {} vs {}",
            mri.subject_id, pet.subject_id
        )));
    }
    if mri.voxels.dim() != pet.voxels.dim() {
        return Err(Error::Shape(format!(
            "paired volumes with different shapes: {:?} vs {:?}",
            mri.voxels.dim(),
            pet.voxels.dim()
        )));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::datamodel::{phantom_volume_pair, Diagnosis};

    #[test]
    fn training_pairs_pipeline() {
        let (mri, pet) = phantom_volume_pair("s0", Diagnosis::EMCI, 1, 32, 192).unwrap();
        let pairs = training_pairs(&mri, &pet, 32).unwrap();
        assert_eq!(pairs.len(), 14);
        for p in &pairs {
            p.validate().unwrap();
            assert_eq!(p.mri.dim(), (32, 32));
        }
        assert_eq!(pairs[5].slice_index, 124);
    }

    #[test]
    fn eval_slices_sets_and_counts() {
        let (mri, pet) = phantom_volume_pair("s1", Diagnosis::CN, 2, 32, 192).unwrap();
        let c100 = eval_slices(&mri, Some(&pet), SliceSet::Central100, 32).unwrap();
        assert_eq!(c100.len(), 101);
        assert!(c100.iter().all(|s| s.pet.is_some()));
        let t14 = eval_slices(&mri, None, SliceSet::Train14, 32).unwrap();
        assert_eq!(t14.len(), 14);
        assert!(t14.iter().all(|s| s.pet.is_none()));
    }

    #[test]
    fn classifier_slice_counts_by_group() {
        let (_, pet_cn) = phantom_volume_pair("a", Diagnosis::SMC, 3, 32, 192).unwrap();
        assert_eq!(classifier_slices(&pet_cn, 32).unwrap().len(), 51);
        let (_, pet_ad) = phantom_volume_pair("b", Diagnosis::AD, 4, 32, 192).unwrap();
        let slices = classifier_slices(&pet_ad, 32).unwrap();
        assert_eq!(slices.len(), 101);
        assert!(slices.iter().all(|s| s.label == 1));
    }

    #[test]
    fn mismatched_pairs_are_rejected() {
        let (mri, _) = phantom_volume_pair("a", Diagnosis::CN, 1, 32, 192).unwrap();
        let (_, pet) = phantom_volume_pair("b", Diagnosis::CN, 2, 32, 192).unwrap();
        assert!(training_pairs(&mri, &pet, 32).is_err());
    }
}
