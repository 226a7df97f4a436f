//! MSE / PSNR / SSIM on [0, 1]-scaled slices.

use ndarray::Array2;

use crate::error::{Error, Result};

/// Remap a [-1, 1] slice onto the [0, 1] metric domain.
pub fn to_unit_range(a: &Array2<f64>) -> Array2<f64> {
    a.mapv(|v| (v + 1.0) / 2.0)
}

pub fn mse(a: &Array2<f64>, b: &Array2<f64>) -> Result<f64> {
    if a.dim() != b.dim() {
        return Err(Error::Shape(format!("mse shapes {:?} vs {:?}", a.dim(), b.dim())));
    }
    let n = a.len() as f64;
    Ok(a.iter()
        .zip(b.iter())
        .map(|(&x, &y)| (x - y) * (x - y))
        .sum::<f64>()
        / n)
}

/// PSNR in dB, capped at 100 dB for zero error.
pub const PSNR_CAP_DB: f64 = 100.0;

pub fn psnr(a: &Array2<f64>, b: &Array2<f64>, data_range: f64) -> Result<f64> {
    let m = mse(a, b)?;
    Ok(psnr_from_mse(m, data_range))
}

pub fn psnr_from_mse(mse: f64, data_range: f64) -> f64 {
    if mse <= 0.0 {
        return PSNR_CAP_DB;
    }
    (10.0 * (data_range * data_range / mse).log10()).min(PSNR_CAP_DB)
}

const SSIM_WINDOW: usize = 11;
const SSIM_SIGMA: f64 = 1.5;
const SSIM_K1: f64 = 0.01;
const SSIM_K2: f64 = 0.03;

fn gaussian_window() -> [f64; SSIM_WINDOW] {
    let mut w = [0.0; SSIM_WINDOW];
    let c = (SSIM_WINDOW / 2) as f64;
    let mut sum = 0.0;
    for (i, v) in w.iter_mut().enumerate() {
        *v = (-((i as f64 - c) * (i as f64 - c)) / (2.0 * SSIM_SIGMA * SSIM_SIGMA)).exp();
        sum += *v;
    }
    for v in &mut w {
        *v /= sum;
    }
    w
}

/// Separable Gaussian filter over valid positions only.
fn filter_valid(img: &Array2<f64>, w: &[f64; SSIM_WINDOW]) -> Array2<f64> {
    let (h, wd) = img.dim();
    let oh = h - SSIM_WINDOW + 1;
    let ow = wd - SSIM_WINDOW + 1;
    let mut rows = Array2::<f64>::zeros((h, ow));
    for y in 0..h {
        for x in 0..ow {
            let mut acc = 0.0;
            for (k, &kv) in w.iter().enumerate() {
                acc += kv * img[[y, x + k]];
            }
            rows[[y, x]] = acc;
        }
    }
    let mut out = Array2::<f64>::zeros((oh, ow));
    for y in 0..oh {
        for x in 0..ow {
            let mut acc = 0.0;
            for (k, &kv) in w.iter().enumerate() {
                acc += kv * rows[[y + k, x]];
            }
            out[[y, x]] = acc;
        }
    }
    out
}

/// Mean local SSIM with an 11x11 Gaussian window (sigma 1.5) over valid
/// window positions, L = data_range = 1.
pub fn ssim(a: &Array2<f64>, b: &Array2<f64>) -> Result<f64> {
    if a.dim() != b.dim() {
        return Err(Error::Shape(format!("ssim shapes {:?} vs {:?}", a.dim(), b.dim())));
    }
    let (h, w) = a.dim();
    if h < SSIM_WINDOW || w < SSIM_WINDOW {
        return Err(Error::Size(format!(
            "ssim needs images of at least {SSIM_WINDOW}x{SSIM_WINDOW}, got {h}x{w}"
        )));
    }
    let win = gaussian_window();
    let mu_a = filter_valid(a, &win);
    let mu_b = filter_valid(b, &win);
    let aa = filter_valid(&(a * a), &win);
    let bb = filter_valid(&(b * b), &win);
    let ab = filter_valid(&(a * b), &win);

    const L: f64 = 1.0;
    let c1 = (SSIM_K1 * L).powi(2);
    let c2 = (SSIM_K2 * L).powi(2);

    let mut total = 0.0;
    for (i, (&ma, &mb)) in mu_a.iter().zip(mu_b.iter()).enumerate() {
        let va = aa.as_slice().unwrap()[i] - ma * ma;
        let vb = bb.as_slice().unwrap()[i] - mb * mb;
        let cov = ab.as_slice().unwrap()[i] - ma * mb;
        total += ((2.0 * ma * mb + c1) * (2.0 * cov + c2))
            / ((ma * ma + mb * mb + c1) * (va + vb + c2));
    }
    Ok(total / mu_a.len() as f64)
}

/// Independent SSIM oracle: the same windowed formula evaluated with
/// explicit per-window loops (no separable filtering).
pub fn ssim_direct_oracle(a: &Array2<f64>, b: &Array2<f64>) -> Result<f64> {
    if a.dim() != b.dim() {
        return Err(Error::Shape("ssim oracle shape mismatch".into()));
    }
    let (h, w) = a.dim();
    if h < SSIM_WINDOW || w < SSIM_WINDOW {
        return Err(Error::Size("ssim oracle window".into()));
    }
    let win = gaussian_window();
    const L: f64 = 1.0;
    let c1 = (SSIM_K1 * L).powi(2);
    let c2 = (SSIM_K2 * L).powi(2);
    let mut total = 0.0;
    let mut count = 0usize;
    for oy in 0..=(h - SSIM_WINDOW) {
        for ox in 0..=(w - SSIM_WINDOW) {
            let mut ma = 0.0;
            let mut mb = 0.0;
            for ky in 0..SSIM_WINDOW {
                for kx in 0..SSIM_WINDOW {
                    let wgt = win[ky] * win[kx];
                    ma += wgt * a[[oy + ky, ox + kx]];
                    mb += wgt * b[[oy + ky, ox + kx]];
                }
            }
            let mut va = 0.0;
            let mut vb = 0.0;
            let mut cov = 0.0;
            for ky in 0..SSIM_WINDOW {
                for kx in 0..SSIM_WINDOW {
                    let wgt = win[ky] * win[kx];
                    let da = a[[oy + ky, ox + kx]] - ma;
                    let db = b[[oy + ky, ox + kx]] - mb;
                    va += wgt * da * da;
                    vb += wgt * db * db;
                    cov += wgt * da * db;
                }
            }
            total += ((2.0 * ma * mb + c1) * (2.0 * cov + c2))
                / ((ma * ma + mb * mb + c1) * (va + vb + c2));
            count += 1;
        }
    }
    Ok(total / count as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    fn random_img(seed: u64, h: usize, w: usize) -> Array2<f64> {
        let mut rng = crate::seeds::rng_from(seed, &["metric-test"]);
        Array2::from_shape_fn((h, w), |_| rng.gen_range(0.0..1.0))
    }

    #[test]
    fn mse_identity_constant_offset_symmetry() {
        let a = random_img(1, 8, 8);
        assert_eq!(mse(&a, &a).unwrap(), 0.0);
        let b = a.mapv(|v| v + 0.1);
        assert!((mse(&a, &b).unwrap() - 0.01).abs() < 1e-12);
        assert_eq!(mse(&a, &b).unwrap(), mse(&b, &a).unwrap());
        let c = random_img(2, 4, 4);
        assert!(mse(&a, &c).is_err());
    }

    #[test]
    fn psnr_reference_points() {
        assert!((psnr_from_mse(0.01, 1.0) - 20.0).abs() < 1e-12);
        assert_eq!(psnr_from_mse(0.0, 1.0), 100.0);
        let gain = psnr_from_mse(0.005, 1.0) - psnr_from_mse(0.01, 1.0);
        assert!((gain - 10.0 * 2.0f64.log10()).abs() < 1e-9);
        let a = random_img(3, 16, 16);
        assert_eq!(psnr(&a, &a, 1.0).unwrap(), 100.0);
    }

    #[test]
    fn psnr_strictly_decreases_with_mse() {
        let mut prev = f64::INFINITY;
        for m in [1e-6, 1e-4, 1e-2, 0.1, 0.5] {
            let v = psnr_from_mse(m, 1.0);
            assert!(v < prev);
            prev = v;
        }
    }

    #[test]
    fn ssim_identity_and_range() {
        let a = random_img(4, 16, 16);
        assert!((ssim(&a, &a).unwrap() - 1.0).abs() < 1e-12);
        for seed in 0..20 {
            let x = random_img(seed, 16, 16);
            let y = random_img(seed + 100, 16, 16);
            let v = ssim(&x, &y).unwrap();
            assert!(v.abs() <= 1.0 + 1e-12, "ssim {v} out of range");
            assert!((ssim(&y, &x).unwrap() - v).abs() < 1e-12, "ssim asymmetric");
        }
    }

    #[test]
    fn ssim_rejects_small_images() {
        let a = random_img(5, 8, 8);
        assert!(matches!(ssim(&a, &a), Err(crate::error::Error::Size(_))));
    }

    #[test]
    fn ssim_constant_images_luminance_only() {
        let (c1v, c2v) = (0.3f64, 0.7f64);
        let a = Array2::from_elem((16, 16), c1v);
        let b = Array2::from_elem((16, 16), c2v);
        let got = ssim(&a, &b).unwrap();
        let c1 = 0.01f64.powi(2);
        let expect = (2.0 * c1v * c2v + c1) / (c1v * c1v + c2v * c2v + c1);
        assert!((got - expect).abs() < 1e-12);
        assert!(got < 1.0);
    }

    #[test]
    fn ssim_matches_direct_oracle() {
        for seed in 0..10 {
            let a = random_img(seed, 16, 16);
            let b = random_img(seed + 50, 16, 16);
            let fast = ssim(&a, &b).unwrap();
            let direct = ssim_direct_oracle(&a, &b).unwrap();
            assert!(
                (fast - direct).abs() < 1e-6,
                "separable {fast} vs direct {direct}"
            );
        }
    }

    #[test]
    fn permutation_invariance_distinguishes_metrics() {
        // mse/psnr are pixel-wise: invariant under a shared permutation.
        // ssim is windowed: the same permutation changes it.
        let a = random_img(7, 16, 16);
        let b = random_img(8, 16, 16);
        let perm = |img: &Array2<f64>| {
            // reverse both axes: a deterministic shared permutation
            let (h, w) = img.dim();
            Array2::from_shape_fn((h, w), |(y, x)| img[[h - 1 - y, w - 1 - x]])
        };
        // interleave rows to break local structure while preserving pixels
        let shuffle = |img: &Array2<f64>| {
            let (h, w) = img.dim();
            Array2::from_shape_fn((h, w), |(y, x)| {
                let sy = (y * 7 + 3) % h;
                let sx = (x * 5 + 1) % w;
                img[[sy, sx]]
            })
        };
        assert!((mse(&a, &b).unwrap() - mse(&perm(&a), &perm(&b)).unwrap()).abs() < 1e-15);
        assert!((mse(&a, &b).unwrap() - mse(&shuffle(&a), &shuffle(&b)).unwrap()).abs() < 1e-15);
        let s1 = ssim(&a, &b).unwrap();
        let s2 = ssim(&shuffle(&a), &shuffle(&b)).unwrap();
        assert!((s1 - s2).abs() > 1e-6, "ssim should be structure-sensitive");
    }
}
