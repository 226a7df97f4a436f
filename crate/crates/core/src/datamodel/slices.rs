//! Slice extraction rules: index selection, padding and intensity scaling.

use ndarray::Array2;

use crate::error::{Error, Result};
use super::Diagnosis;

/// Central slice band used throughout: indices 76..=176.
pub const CENTRAL_LO: usize = 76;
pub const CENTRAL_HI: usize = 176;

/// The 14 training slices: every 10th index in 76..=166 plus the four
/// extra slices 124, 128, 130, 132. Requires depth >= 177.
pub fn select_training_slices(depth: usize) -> Result<Vec<usize>> {
    if depth <= CENTRAL_HI {
        return Err(Error::Range(format!(
            "volume depth {depth} too shallow for slice band {CENTRAL_LO}..={CENTRAL_HI}"
        )));
    }
    let mut set: Vec<usize> = (CENTRAL_LO..=166).step_by(10).collect();
    set.extend_from_slice(&[124, 128, 130, 132]);
    set.sort_unstable();
    set.dedup();
    debug_assert_eq!(set.len(), 14);
    Ok(set)
}

/// Classifier slice sampling over the central band: every slice for the
/// MCI/AD group, every other slice for the CN group (CN, SMC).
pub fn select_classifier_slices(depth: usize, diagnosis: Diagnosis) -> Result<Vec<usize>> {
    if depth <= CENTRAL_HI {
        return Err(Error::Range(format!(
            "volume depth {depth} too shallow for slice band {CENTRAL_LO}..={CENTRAL_HI}"
        )));
    }
    let step = match diagnosis.class_label() {
        0 => 2,
        _ => 1,
    };
    Ok((CENTRAL_LO..=CENTRAL_HI).step_by(step).collect())
}

/// Zero-pad a slice symmetrically in width up to `target`, using the
/// normalized background value -1. Height must already equal `target`.
pub fn pad_axial_slice(slice: &Array2<f64>, target: usize) -> Result<Array2<f64>> {
    let (h, w) = slice.dim();
    if h != target {
        return Err(Error::Shape(format!(
            "expected height {target}, got {h}"
        )));
    }
    if w > target {
        return Err(Error::Shape(format!(
            "width {w} exceeds target {target}"
        )));
    }
    if w == target {
        return Ok(slice.clone());
    }
    let left = (target - w) / 2;
    let mut out = Array2::from_elem((target, target), -1.0);
    out.slice_mut(ndarray::s![.., left..left + w]).assign(slice);
    Ok(out)
}

/// Affine intensity map [lo, hi] -> [-1, 1] with clamping.
pub fn normalize_intensity(slice: &Array2<f64>, lo: f64, hi: f64) -> Result<Array2<f64>> {
    if !(hi > lo) {
        return Err(Error::DegenerateRange(format!(
            "normalization bounds lo={lo} hi={hi}"
        )));
    }
    let scale = 2.0 / (hi - lo);
    Ok(slice.mapv(|v| ((v - lo) * scale - 1.0).clamp(-1.0, 1.0)))
}

/// Per-volume robust bounds: the 0.5th and 99.5th percentiles
/// (linear interpolation between closest ranks).
pub fn robust_bounds(values: &[f64]) -> Result<(f64, f64)> {
    if values.is_empty() {
        return Err(Error::Data("cannot take percentiles of empty volume".into()));
    }
    let mut sorted: Vec<f64> = values.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let pct = |p: f64| -> f64 {
        let pos = p / 100.0 * (sorted.len() - 1) as f64;
        let i = pos.floor() as usize;
        let frac = pos - i as f64;
        if i + 1 < sorted.len() {
            sorted[i] * (1.0 - frac) + sorted[i + 1] * frac
        } else {
            sorted[i]
        }
    };
    Ok((pct(0.5), pct(99.5)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::Array2;

    #[test]
    fn training_slices_match_published_scheme() {
        let got = select_training_slices(256).unwrap();
        assert_eq!(
            got,
            vec![76, 86, 96, 106, 116, 124, 126, 128, 130, 132, 136, 146, 156, 166]
        );
        assert_eq!(got.len(), 14);
    }

    #[test]
    fn training_slices_reject_shallow_volumes() {
        assert!(matches!(select_training_slices(100), Err(Error::Range(_))));
        assert!(matches!(select_training_slices(176), Err(Error::Range(_))));
        assert!(select_training_slices(177).is_ok());
    }

    #[test]
    fn training_slices_deterministic() {
        assert_eq!(select_training_slices(200).unwrap(), select_training_slices(200).unwrap());
    }

    #[test]
    fn classifier_slices_counts() {
        assert_eq!(select_classifier_slices(256, Diagnosis::AD).unwrap().len(), 101);
        assert_eq!(select_classifier_slices(256, Diagnosis::EMCI).unwrap().len(), 101);
        let cn = select_classifier_slices(256, Diagnosis::CN).unwrap();
        assert_eq!(cn.len(), 51);
        assert_eq!(cn.first(), Some(&76));
        assert_eq!(cn.last(), Some(&176));
        // SMC samples like CN
        assert_eq!(select_classifier_slices(256, Diagnosis::SMC).unwrap(), cn);
    }

    #[test]
    fn padding_centers_content() {
        let s = Array2::from_elem((256, 170), 1.0);
        let p = pad_axial_slice(&s, 256).unwrap();
        assert_eq!(p.dim(), (256, 256));
        assert_eq!(p[[0, 0]], -1.0);
        assert_eq!(p[[100, 43]], 1.0);
        assert_eq!(p[[100, 42]], -1.0);
        assert_eq!(p[[100, 212]], 1.0);
        assert_eq!(p[[100, 213]], -1.0);
        let total: f64 = p.iter().filter(|&&v| v == 1.0).count() as f64;
        assert_eq!(total, 256.0 * 170.0);
    }

    #[test]
    fn padding_identity_and_errors() {
        let s = Array2::from_elem((256, 256), 0.5);
        assert_eq!(pad_axial_slice(&s, 256).unwrap(), s);
        let wide = Array2::from_elem((256, 300), 0.0);
        assert!(matches!(pad_axial_slice(&wide, 256), Err(Error::Shape(_))));
    }

    #[test]
    fn normalization_endpoints_and_midpoint() {
        let s = ndarray::arr2(&[[10.0, 20.0, 15.0]]);
        let n = normalize_intensity(&s, 10.0, 20.0).unwrap();
        assert_eq!(n[[0, 0]], -1.0);
        assert_eq!(n[[0, 1]], 1.0);
        assert_eq!(n[[0, 2]], 0.0);
        assert!(matches!(
            normalize_intensity(&s, 5.0, 5.0),
            Err(Error::DegenerateRange(_))
        ));
    }

    #[test]
    fn normalization_is_monotone_and_clamped() {
        let s = ndarray::arr2(&[[-100.0, 0.0, 1.0, 2.0, 100.0]]);
        let n = normalize_intensity(&s, 0.0, 2.0).unwrap();
        for w in n.as_slice().unwrap().windows(2) {
            assert!(w[0] <= w[1]);
        }
        assert_eq!(n[[0, 0]], -1.0);
        assert_eq!(n[[0, 4]], 1.0);
    }

    #[test]
    fn robust_bounds_on_uniform_grid() {
        let vals: Vec<f64> = (0..=1000).map(|i| i as f64).collect();
        let (lo, hi) = robust_bounds(&vals).unwrap();
        assert!((lo - 5.0).abs() < 1e-9);
        assert!((hi - 995.0).abs() < 1e-9);
    }
}
