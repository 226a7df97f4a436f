//! Domain types and data plumbing: volumes, slice pairs, subject splits,
//! slice-selection rules and the synthetic phantom corpus.

mod manifest;
mod phantom;
pub mod pipeline;
mod slices;
mod split;

pub use manifest::{read_manifest, write_manifest, ManifestEntry};
pub use phantom::{
    make_phantom_pair, phantom_diagnosis_counts, phantom_pet_from_mri, phantom_volume_pair,
    PhantomParams,
};
pub use slices::{
    normalize_intensity, pad_axial_slice, robust_bounds, select_classifier_slices,
    select_training_slices,
};
pub use split::stratified_split;

use ndarray::{Array2, Array3};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Clinical diagnosis labels.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Diagnosis {
    CN,
    EMCI,
    LMCI,
    SMC,
    AD,
}

impl Diagnosis {
    pub const ALL: [Diagnosis; 5] = [
        Diagnosis::CN,
        Diagnosis::EMCI,
        Diagnosis::LMCI,
        Diagnosis::SMC,
        Diagnosis::AD,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            Diagnosis::CN => "CN",
            Diagnosis::EMCI => "EMCI",
            Diagnosis::LMCI => "LMCI",
            Diagnosis::SMC => "SMC",
            Diagnosis::AD => "AD",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s.trim() {
            "CN" => Ok(Diagnosis::CN),
            "EMCI" => Ok(Diagnosis::EMCI),
            "LMCI" => Ok(Diagnosis::LMCI),
            "SMC" => Ok(Diagnosis::SMC),
            "AD" => Ok(Diagnosis::AD),
            other => Err(Error::Metadata(format!("unknown diagnosis label '{other}'"))),
        }
    }

    /// Synthesis-evaluation grouping: SMC reports with CN, EMCI/LMCI as MCI.
    pub fn synthesis_group(&self) -> SynthesisGroup {
        match self {
            Diagnosis::CN | Diagnosis::SMC => SynthesisGroup::Cn,
            Diagnosis::EMCI | Diagnosis::LMCI => SynthesisGroup::Mci,
            Diagnosis::AD => SynthesisGroup::Ad,
        }
    }

    /// Binary classification label: CN-group (CN, SMC) = 0, MCI/AD = 1.
    pub fn class_label(&self) -> u8 {
        match self {
            Diagnosis::CN | Diagnosis::SMC => 0,
            Diagnosis::EMCI | Diagnosis::LMCI | Diagnosis::AD => 1,
        }
    }
}

impl std::fmt::Display for Diagnosis {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Diagnostic groups used when reporting synthesis quality.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum SynthesisGroup {
    Cn,
    Mci,
    Ad,
}

impl SynthesisGroup {
    pub fn as_str(&self) -> &'static str {
        match self {
            SynthesisGroup::Cn => "CN",
            SynthesisGroup::Mci => "MCI",
            SynthesisGroup::Ad => "AD",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Modality {
    Mri,
    Pet,
}

/// A 3-d image volume with subject metadata. Axial slice `i` is
/// `voxels[i]`, a (height, width) grid.
#[derive(Debug, Clone)]
pub struct Volume {
    pub voxels: Array3<f64>,
    pub subject_id: String,
    pub diagnosis: Diagnosis,
    pub modality: Modality,
}

impl Volume {
    pub fn depth(&self) -> usize {
        self.voxels.shape()[0]
    }

    pub fn slice(&self, index: usize) -> Result<Array2<f64>> {
        if index >= self.depth() {
            return Err(Error::Range(format!(
                "slice index {} out of range for depth {}",
                index,
                self.depth()
            )));
        }
        Ok(self.voxels.index_axis(ndarray::Axis(0), index).to_owned())
    }
}

/// An aligned (MRI, PET) axial slice pair, both normalized to [-1, 1].
#[derive(Debug, Clone)]
pub struct SlicePair {
    pub mri: Array2<f64>,
    pub pet: Array2<f64>,
    pub slice_index: usize,
    pub subject_id: String,
    pub diagnosis: Diagnosis,
}

impl SlicePair {
    pub fn validate(&self) -> Result<()> {
        if self.mri.shape() != self.pet.shape() {
            return Err(Error::Shape(format!(
                "mri {:?} and pet {:?} shapes differ for subject {}",
                self.mri.shape(),
                self.pet.shape(),
                self.subject_id
            )));
        }
        let in_range = |a: &Array2<f64>| a.iter().all(|&v| (-1.0..=1.0).contains(&v));
        if !in_range(&self.mri) || !in_range(&self.pet) {
            return Err(Error::Range(format!(
                "intensities outside [-1, 1] for subject {}",
                self.subject_id
            )));
        }
        Ok(())
    }
}

/// Subject-level train/test split.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DatasetSplit {
    pub train_subjects: Vec<String>,
    pub test_subjects: Vec<String>,
    pub seed: u64,
}
