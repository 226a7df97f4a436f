//! Evaluation protocols: synthesis quality over test-set slices and
//! subject-level classification on real versus synthesized inputs.

use std::path::Path;

use ndarray::Array2;

use crate::datamodel::{Diagnosis, SynthesisGroup};
use crate::error::{Error, Result};
use crate::io::png::{write_gray_png, write_panel_png};
use crate::trainer::aggregate_subject_prediction;
use super::image::{mse, psnr_from_mse, ssim, to_unit_range};
use super::report::{ClassificationTallies, MetricsReport, SliceRecord, Tally};

/// One evaluation slice: normalized MRI plus the real PET when available.
#[derive(Debug, Clone)]
pub struct EvalSlice {
    pub subject_id: String,
    pub diagnosis: Diagnosis,
    pub slice_index: usize,
    pub mri: Array2<f64>,
    pub pet: Option<Array2<f64>>,
}

/// Run a generator over evaluation slices and compute per-slice metrics on
/// the [0, 1] domain; slices without a real PET are skipped.
pub fn evaluate_synthesis(
    generate: &mut dyn FnMut(&Array2<f64>) -> Result<Array2<f64>>,
    slices: &[EvalSlice],
) -> Result<MetricsReport> {
    let mut records = Vec::new();
    let mut missing = Vec::new();
    for s in slices {
        let pet = match &s.pet {
            Some(p) => p,
            None => {
                missing.push(format!("{}:{}", s.subject_id, s.slice_index));
                continue;
            }
        };
        let pet_hat = generate(&s.mri)?;
        if pet_hat.dim() != pet.dim() {
            return Err(Error::Shape(format!(
                "generated slice {:?} vs real {:?} for {}",
                pet_hat.dim(),
                pet.dim(),
                s.subject_id
            )));
        }
        let y = to_unit_range(pet);
        let y_hat = to_unit_range(&pet_hat);
        let m = mse(&y, &y_hat)?;
        records.push(SliceRecord {
            subject_id: s.subject_id.clone(),
            slice_index: s.slice_index,
            diagnosis: s.diagnosis,
            mse: m,
            psnr_db: psnr_from_mse(m, 1.0),
            ssim: ssim(&y, &y_hat)?,
        });
    }
    if records.is_empty() {
        return Err(Error::Data(format!(
            "no evaluable slice pairs (missing PET for: {})",
            missing.join(", ")
        )));
    }
    Ok(MetricsReport::new(records))
}

/// Slices of one subject entering the classifier.
#[derive(Debug, Clone)]
pub struct SubjectSlices {
    pub subject_id: String,
    pub diagnosis: Diagnosis,
    pub slices: Vec<Array2<f64>>,
}

/// Subject-level accuracy: per-slice probabilities aggregate by majority
/// vote, tallied overall and per group as in the published layout.
pub fn evaluate_classifier(
    predict: &mut dyn FnMut(&Array2<f64>) -> Result<f64>,
    subjects: &[SubjectSlices],
    source: &str,
) -> Result<ClassificationTallies> {
    if subjects.is_empty() {
        return Err(Error::Data("no subjects to classify".into()));
    }
    let mut overall = Tally { correct: 0, total: 0 };
    let mut cn = Tally { correct: 0, total: 0 };
    let mut mci_ad = Tally { correct: 0, total: 0 };
    for s in subjects {
        let mut probs = Vec::with_capacity(s.slices.len());
        for slice in &s.slices {
            probs.push(predict(slice)?);
        }
        let (label, _mean) = aggregate_subject_prediction(&probs)?;
        let truth = s.diagnosis.class_label();
        let correct = label == truth;
        overall.total += 1;
        overall.correct += correct as usize;
        if truth == 0 {
            cn.total += 1;
            cn.correct += correct as usize;
        } else {
            mci_ad.total += 1;
            mci_ad.correct += correct as usize;
        }
    }
    let tallies = ClassificationTallies {
        source: source.to_string(),
        overall,
        cn_group: cn,
        mci_ad_group: mci_ad,
    };
    tallies.validate()?;
    Ok(tallies)
}

/// Absolute difference map |y - y_hat| on the [0, 1] scale, written as an
/// 8-bit grayscale PNG; also writes the four-column panel
/// (MRI, real PET, synthetic PET, difference) next to it.
pub fn render_difference_map(
    mri: &Array2<f64>,
    pet_real: &Array2<f64>,
    pet_hat: &Array2<f64>,
    diff_path: &Path,
    panel_path: Option<&Path>,
) -> Result<()> {
    if pet_real.dim() != pet_hat.dim() {
        return Err(Error::Shape(format!(
            "difference map shapes {:?} vs {:?}",
            pet_real.dim(),
            pet_hat.dim()
        )));
    }
    let y = to_unit_range(pet_real);
    let y_hat = to_unit_range(pet_hat);
    let diff = ndarray::Zip::from(&y).and(&y_hat).map_collect(|a, b| (a - b).abs());
    write_gray_png(diff_path, &diff)?;
    if let Some(panel) = panel_path {
        let m = to_unit_range(mri);
        write_panel_png(panel, &[&m, &y, &y_hat, &diff])?;
    }
    Ok(())
}

/// Group sizes of a subject list under the synthesis grouping.
pub fn group_sizes(subjects: &[(String, Diagnosis)]) -> Vec<(SynthesisGroup, usize)> {
    let groups = [SynthesisGroup::Cn, SynthesisGroup::Mci, SynthesisGroup::Ad];
    groups
        .iter()
        .map(|&g| {
            (
                g,
                subjects
                    .iter()
                    .filter(|(_, dx)| dx.synthesis_group() == g)
                    .count(),
            )
        })
        .collect()
}
