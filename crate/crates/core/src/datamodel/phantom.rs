//! Deterministic synthetic phantoms standing in for restricted clinical data.
//!
//! An MRI slice is a smoothed elliptical "anatomy" built from seeded blobs;
//! the paired PET slice is a fixed nonlinear function of the MRI alone
//! (intensity remap plus uptake blobs at anatomy-dependent positions), so a
//! pair can always be re-derived from its MRI bit-for-bit.

use ndarray::{Array2, Array3};
use rand::Rng;

use crate::error::{Error, Result};
use crate::seeds;
use super::{Diagnosis, Modality, SlicePair, Volume};

pub const MIN_PHANTOM_SIZE: usize = 32;

/// Geometry of one synthetic subject. All fields derive from the seed.
#[derive(Debug, Clone)]
pub struct PhantomParams {
    center: (f64, f64),
    radii: (f64, f64),
    blobs: Vec<(f64, f64, f64, f64)>, // (cy, cx, sigma, amplitude), relative units
    /// 0 = healthy anatomy, 1 = severe atrophy (enlarged ventricles).
    severity: f64,
}

impl PhantomParams {
    pub fn from_seed(seed: u64, severity: f64) -> Self {
        let mut rng = seeds::rng_from(seed, &["phantom-anatomy"]);
        let center = (
            0.5 + rng.gen_range(-0.03..0.03),
            0.5 + rng.gen_range(-0.03..0.03),
        );
        let radii = (
            0.36 + rng.gen_range(-0.03..0.03),
            0.30 + rng.gen_range(-0.03..0.03),
        );
        let n_blobs = 5;
        let blobs = (0..n_blobs)
            .map(|_| {
                (
                    rng.gen_range(-0.6..0.6),
                    rng.gen_range(-0.6..0.6),
                    rng.gen_range(0.08..0.2),
                    rng.gen_range(-0.45..0.45),
                )
            })
            .collect();
        PhantomParams {
            center,
            radii,
            blobs,
            severity: severity.clamp(0.0, 1.0),
        }
    }

    pub fn severity_of(dx: Diagnosis) -> f64 {
        match dx {
            Diagnosis::CN => 0.0,
            Diagnosis::SMC => 0.15,
            Diagnosis::EMCI => 0.45,
            Diagnosis::LMCI => 0.7,
            Diagnosis::AD => 1.0,
        }
    }

    /// Render the MRI slice at a relative axial position `profile` in (0, 1];
    /// the anatomy shrinks toward the ends of the head.
    pub fn render_mri(&self, size: usize, profile: f64) -> Array2<f64> {
        let scale = profile.clamp(0.0, 1.0);
        if scale <= 0.0 {
            return Array2::from_elem((size, size), -1.0);
        }
        let (cy, cx) = (self.center.0 * size as f64, self.center.1 * size as f64);
        let (ry, rx) = (
            self.radii.0 * size as f64 * scale,
            self.radii.1 * size as f64 * scale,
        );
        let mut raw = Array2::<f64>::zeros((size, size));
        for y in 0..size {
            for x in 0..size {
                let dy = (y as f64 - cy) / ry.max(1.0);
                let dx = (x as f64 - cx) / rx.max(1.0);
                let r2 = dy * dy + dx * dx;
                if r2 > 1.0 {
                    continue;
                }
                // cortical rim brighter than interior tissue
                let rim = if r2 > 0.78 { 0.95 } else { 0.55 };
                let mut v = rim;
                for &(by, bx, bs, ba) in &self.blobs {
                    let gy = dy - by;
                    let gx = dx - bx;
                    v += ba * (-(gy * gy + gx * gx) / (2.0 * bs * bs)).exp();
                }
                // ventricles: paired dark lobes that enlarge with severity
                let vent_r = 0.12 + 0.2 * self.severity;
                for sx in [-0.18f64, 0.18f64] {
                    let gy = dy / 1.6;
                    let gx = dx - sx;
                    let d = (gy * gy + gx * gx) / (vent_r * vent_r);
                    if d < 1.0 {
                        v -= 0.7 * (1.0 - d);
                    }
                }
                raw[[y, x]] = v.clamp(0.02, 1.0);
            }
        }
        let raw = gaussian_blur(&raw, size as f64 / 48.0);
        raw.mapv(|v| (2.0 * v.clamp(0.0, 1.0) - 1.0).clamp(-1.0, 1.0))
    }
}

/// Separable Gaussian blur with reflective edges.
fn gaussian_blur(img: &Array2<f64>, sigma: f64) -> Array2<f64> {
    if sigma <= 0.0 {
        return img.clone();
    }
    let radius = (3.0 * sigma).ceil() as isize;
    let kernel: Vec<f64> = (-radius..=radius)
        .map(|i| (-(i * i) as f64 / (2.0 * sigma * sigma)).exp())
        .collect();
    let norm: f64 = kernel.iter().sum();
    let kernel: Vec<f64> = kernel.into_iter().map(|v| v / norm).collect();
    let (h, w) = img.dim();
    let reflect = |i: isize, n: usize| -> usize {
        let n = n as isize;
        let mut i = i;
        if i < 0 {
            i = -i - 1;
        }
        if i >= n {
            i = 2 * n - 1 - i;
        }
        i.clamp(0, n - 1) as usize
    };
    let mut tmp = Array2::<f64>::zeros((h, w));
    for y in 0..h {
        for x in 0..w {
            let mut acc = 0.0;
            for (k, kv) in kernel.iter().enumerate() {
                let xi = reflect(x as isize + k as isize - radius, w);
                acc += kv * img[[y, xi]];
            }
            tmp[[y, x]] = acc;
        }
    }
    let mut out = Array2::<f64>::zeros((h, w));
    for y in 0..h {
        for x in 0..w {
            let mut acc = 0.0;
            for (k, kv) in kernel.iter().enumerate() {
                let yi = reflect(y as isize + k as isize - radius, h);
                acc += kv * tmp[[yi, x]];
            }
            out[[y, x]] = acc;
        }
    }
    out
}

/// The fixed MRI -> PET mapping. Pure function of the MRI content: uptake
/// blobs sit at positions derived from the intensity-weighted centroid and
/// spread of the anatomy, with amplitude driven by ventricular darkness
/// (a proxy for atrophy), so diagnosis information carried by the MRI
/// survives into the PET.
pub fn phantom_pet_from_mri(mri: &Array2<f64>) -> Array2<f64> {
    let (h, w) = mri.dim();
    // intensity-weighted moments of the brain mask
    let mut mass = 0.0;
    let mut my = 0.0;
    let mut mx = 0.0;
    for y in 0..h {
        for x in 0..w {
            let v = (mri[[y, x]] + 1.0) / 2.0;
            if v > 0.05 {
                mass += v;
                my += v * y as f64;
                mx += v * x as f64;
            }
        }
    }
    if mass <= 0.0 {
        return Array2::from_elem((h, w), -1.0);
    }
    let (cy, cx) = (my / mass, mx / mass);
    let mut sy = 0.0;
    let mut sx = 0.0;
    let mut dark = 0.0; // ventricular darkness inside the brain
    let mut area = 0.0f64;
    for y in 0..h {
        for x in 0..w {
            let v = (mri[[y, x]] + 1.0) / 2.0;
            if v > 0.05 {
                sy += v * (y as f64 - cy).powi(2);
                sx += v * (x as f64 - cx).powi(2);
                dark += (0.45 - v).max(0.0);
                area += 1.0;
            }
        }
    }
    let (ry, rx) = ((sy / mass).sqrt().max(1.0), (sx / mass).sqrt().max(1.0));
    let uptake_amp = 0.35 + 1.6 * (dark / area.max(1.0));

    let mut pet = Array2::<f64>::zeros((h, w));
    let sites = [
        (-0.9f64, -0.9f64),
        (-0.9, 0.9),
        (0.9, -0.9),
        (0.9, 0.9),
        (0.0, 0.0),
    ];
    for y in 0..h {
        for x in 0..w {
            let v = (mri[[y, x]] + 1.0) / 2.0;
            if v <= 0.05 {
                pet[[y, x]] = -1.0;
                continue;
            }
            // smooth intensity remap of the underlying tissue
            let mut u = 0.55 * v + 0.35 * v * v;
            for &(oy, ox) in &sites {
                let gy = (y as f64 - (cy + oy * ry)) / (0.45 * ry);
                let gx = (x as f64 - (cx + ox * rx)) / (0.45 * rx);
                u += uptake_amp * 0.5 * (-(gy * gy + gx * gx) / 2.0).exp();
            }
            pet[[y, x]] = (2.0 * (u / (1.0 + u)).clamp(0.0, 1.0) - 1.0).clamp(-1.0, 1.0);
        }
    }
    pet
}

/// Deterministic synthetic (MRI, PET) slice pair.
pub fn make_phantom_pair(seed: u64, size: usize) -> Result<SlicePair> {
    if size < MIN_PHANTOM_SIZE {
        return Err(Error::Size(format!(
            "phantom size {size} below minimum {MIN_PHANTOM_SIZE}"
        )));
    }
    let params = PhantomParams::from_seed(seed, severity_from_seed(seed));
    let mri = params.render_mri(size, 1.0);
    let pet = phantom_pet_from_mri(&mri);
    Ok(SlicePair {
        mri,
        pet,
        slice_index: 128,
        subject_id: format!("phantom-{seed:08x}"),
        diagnosis: diagnosis_from_seed(seed),
    })
}

fn diagnosis_from_seed(seed: u64) -> Diagnosis {
    let mut rng = seeds::rng_from(seed, &["phantom-dx"]);
    Diagnosis::ALL[rng.gen_range(0..Diagnosis::ALL.len())]
}

fn severity_from_seed(seed: u64) -> f64 {
    PhantomParams::severity_of(diagnosis_from_seed(seed))
}

/// Paired (MRI, PET) phantom volumes for one subject. Depth must leave room
/// for the central slice band; anatomy follows a smooth axial profile.
pub fn phantom_volume_pair(
    subject_id: &str,
    diagnosis: Diagnosis,
    seed: u64,
    size: usize,
    depth: usize,
) -> Result<(Volume, Volume)> {
    if size < MIN_PHANTOM_SIZE {
        return Err(Error::Size(format!(
            "phantom size {size} below minimum {MIN_PHANTOM_SIZE}"
        )));
    }
    if depth < 177 {
        return Err(Error::Range(format!(
            "phantom depth {depth} below 177 (central band needs indices up to 176)"
        )));
    }
    let params = PhantomParams::from_seed(seed, PhantomParams::severity_of(diagnosis));
    // extent always spans the central band with margin, whatever the depth
    let (z0, z1) = ((depth as f64 * 0.08).min(40.0), (depth as f64 * 0.92).max(186.0));
    let mut mri = Array3::<f64>::from_elem((depth, size, size), -1.0);
    let mut pet = Array3::<f64>::from_elem((depth, size, size), -1.0);
    for z in 0..depth {
        let t = (z as f64 - z0) / (z1 - z0);
        if !(0.0..=1.0).contains(&t) {
            continue;
        }
        let profile = (std::f64::consts::PI * t).sin().max(0.0);
        if profile < 0.15 {
            continue;
        }
        let m = params.render_mri(size, profile);
        let p = phantom_pet_from_mri(&m);
        mri.index_axis_mut(ndarray::Axis(0), z).assign(&m);
        pet.index_axis_mut(ndarray::Axis(0), z).assign(&p);
    }
    let mk = |vox: Array3<f64>, modality| Volume {
        voxels: vox,
        subject_id: subject_id.to_string(),
        diagnosis,
        modality,
    };
    Ok((mk(mri, Modality::Mri), mk(pet, Modality::Pet)))
}

/// Apportion `n` subjects over the five diagnosis classes following the
/// published cohort proportions (72/45/31/62/12 out of 222), floor plus
/// largest remainder.
pub fn phantom_diagnosis_counts(n: usize) -> Vec<(Diagnosis, usize)> {
    let weights = [
        (Diagnosis::CN, 72.0),
        (Diagnosis::EMCI, 45.0),
        (Diagnosis::LMCI, 31.0),
        (Diagnosis::SMC, 62.0),
        (Diagnosis::AD, 12.0),
    ];
    let total: f64 = weights.iter().map(|(_, w)| w).sum();
    let mut counts: Vec<(Diagnosis, usize)> = Vec::new();
    let mut rem: Vec<(usize, f64)> = Vec::new();
    for (i, (dx, w)) in weights.iter().enumerate() {
        let exact = n as f64 * w / total;
        counts.push((*dx, exact.floor() as usize));
        rem.push((i, exact - exact.floor()));
    }
    let assigned: usize = counts.iter().map(|(_, c)| c).sum();
    rem.sort_by(|a, b| b.1.partial_cmp(&a.1).unwrap().then(a.0.cmp(&b.0)));
    for (i, _) in rem.into_iter().take(n - assigned) {
        counts[i].1 += 1;
    }
    counts
}
