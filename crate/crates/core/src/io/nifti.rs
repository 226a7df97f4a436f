//! Minimal NIfTI-1 volume I/O (.nii / .nii.gz), little-endian single-file
//! layout. Reads the common scalar datatypes with slope/intercept scaling;
//! writes float32. Volumes map as [nz, ny, nx] = (depth, height, width),
//! which matches NIfTI's x-fastest linear order directly.

use std::fs::File;
use std::io::{Read, Write};
use std::path::Path;

use flate2::read::GzDecoder;
use flate2::write::GzEncoder;
use ndarray::Array3;
use serde::{Deserialize, Serialize};

use crate::datamodel::{Diagnosis, Modality, Volume};
use crate::error::{Error, Result};

const HDR_SIZE: usize = 348;
const VOX_OFFSET: usize = 352;

fn read_all(path: &Path) -> Result<Vec<u8>> {
    let f = File::open(path)
        .map_err(|e| Error::Format(format!("cannot open {}: {e}", path.display())))?;
    let mut buf = Vec::new();
    if path.extension().is_some_and(|e| e == "gz") {
        GzDecoder::new(f)
            .read_to_end(&mut buf)
            .map_err(|e| Error::Format(format!("gzip decode {}: {e}", path.display())))?;
    } else {
        let mut f = f;
        f.read_to_end(&mut buf)?;
    }
    Ok(buf)
}

fn i16_at(b: &[u8], off: usize) -> i16 {
    i16::from_le_bytes([b[off], b[off + 1]])
}

fn i32_at(b: &[u8], off: usize) -> i32 {
    i32::from_le_bytes([b[off], b[off + 1], b[off + 2], b[off + 3]])
}

fn f32_at(b: &[u8], off: usize) -> f32 {
    f32::from_le_bytes([b[off], b[off + 1], b[off + 2], b[off + 3]])
}

/// Read voxel data into (depth, height, width) order.
pub fn read_nifti(path: &Path) -> Result<Array3<f64>> {
    let buf = read_all(path)?;
    if buf.len() < VOX_OFFSET {
        return Err(Error::Format(format!(
            "{}: file shorter than NIfTI-1 header",
            path.display()
        )));
    }
    if i32_at(&buf, 0) != HDR_SIZE as i32 {
        return Err(Error::Format(format!(
            "{}: bad sizeof_hdr (not little-endian NIfTI-1?)",
            path.display()
        )));
    }
    if &buf[344..347] != b"n+1" {
        return Err(Error::Format(format!("{}: bad magic", path.display())));
    }
    let ndim = i16_at(&buf, 40);
    if !(1..=7).contains(&ndim) {
        return Err(Error::Format(format!("{}: corrupt dim[0]={ndim}", path.display())));
    }
    let dim = |i: usize| i16_at(&buf, 40 + 2 * i).max(1) as usize;
    let (nx, ny, nz) = (dim(1), dim(2), dim(3));
    let n_extra: usize = (4..=ndim as usize).map(dim).product::<usize>().max(1);
    if n_extra != 1 {
        return Err(Error::Format(format!(
            "{}: only 3-d volumes supported, got trailing dims product {n_extra}",
            path.display()
        )));
    }
    let datatype = i16_at(&buf, 70);
    let vox_offset = f32_at(&buf, 108).max(VOX_OFFSET as f32) as usize;
    let mut slope = f32_at(&buf, 112) as f64;
    let inter = f32_at(&buf, 116) as f64;
    if slope == 0.0 {
        slope = 1.0;
    }
    let n = nx * ny * nz;
    let data = &buf[vox_offset..];
    let mut vox = Vec::with_capacity(n);
    let need = |bytes: usize| -> Result<()> {
        if data.len() < n * bytes {
            Err(Error::Format(format!(
                "{}: voxel data truncated ({} < {})",
                path.display(),
                data.len(),
                n * bytes
            )))
        } else {
            Ok(())
        }
    };
    match datatype {
        2 => {
            need(1)?;
            vox.extend(data[..n].iter().map(|&b| b as f64));
        }
        4 => {
            need(2)?;
            vox.extend((0..n).map(|i| i16_at(data, 2 * i) as f64));
        }
        8 => {
            need(4)?;
            vox.extend((0..n).map(|i| i32_at(data, 4 * i) as f64));
        }
        16 => {
            need(4)?;
            vox.extend((0..n).map(|i| f32_at(data, 4 * i) as f64));
        }
        64 => {
            need(8)?;
            vox.extend((0..n).map(|i| {
                f64::from_le_bytes(data[8 * i..8 * i + 8].try_into().unwrap())
            }));
        }
        dt => {
            return Err(Error::Format(format!(
                "{}: unsupported NIfTI datatype {dt}",
                path.display()
            )))
        }
    }
    let vox: Vec<f64> = vox.into_iter().map(|v| v * slope + inter).collect();
    Array3::from_shape_vec((nz, ny, nx), vox)
        .map_err(|e| Error::Format(format!("{}: {e}", path.display())))
}

/// Write voxels (depth, height, width) as float32 NIfTI-1; gzip when the
/// path ends in .gz.
pub fn write_nifti(path: &Path, vox: &Array3<f64>) -> Result<()> {
    let (nz, ny, nx) = vox.dim();
    let mut hdr = vec![0u8; VOX_OFFSET];
    hdr[0..4].copy_from_slice(&(HDR_SIZE as i32).to_le_bytes());
    let dims: [i16; 8] = [3, nx as i16, ny as i16, nz as i16, 1, 1, 1, 1];
    for (i, d) in dims.iter().enumerate() {
        hdr[40 + 2 * i..42 + 2 * i].copy_from_slice(&d.to_le_bytes());
    }
    hdr[70..72].copy_from_slice(&16i16.to_le_bytes()); // float32
    hdr[72..74].copy_from_slice(&32i16.to_le_bytes()); // bitpix
    // pixdim[0..3] = 1.0
    for i in 0..4 {
        hdr[76 + 4 * i..80 + 4 * i].copy_from_slice(&1.0f32.to_le_bytes());
    }
    hdr[108..112].copy_from_slice(&(VOX_OFFSET as f32).to_le_bytes());
    hdr[112..116].copy_from_slice(&1.0f32.to_le_bytes()); // scl_slope
    hdr[344..348].copy_from_slice(b"n+1\0");

    let mut body = Vec::with_capacity(VOX_OFFSET + 4 * vox.len());
    body.extend_from_slice(&hdr);
    for v in vox.iter() {
        body.extend_from_slice(&(*v as f32).to_le_bytes());
    }
    let f = File::create(path)?;
    if path.extension().is_some_and(|e| e == "gz") {
        let mut enc = GzEncoder::new(f, flate2::Compression::fast());
        enc.write_all(&body)?;
        enc.finish()?;
    } else {
        let mut f = f;
        f.write_all(&body)?;
    }
    Ok(())
}

#[derive(Debug, Serialize, Deserialize)]
struct Sidecar {
    subject_id: String,
    diagnosis: String,
}

fn sidecar_path(path: &Path) -> std::path::PathBuf {
    let name = path.file_name().unwrap_or_default().to_string_lossy();
    let stem = name
        .strip_suffix(".nii.gz")
        .or_else(|| name.strip_suffix(".nii"))
        .unwrap_or(&name);
    path.with_file_name(format!("{stem}.json"))
}

/// Load a volume plus metadata from its JSON sidecar
/// (`<stem>.json` next to the file).
pub fn load_volume(path: &Path, modality: Modality) -> Result<Volume> {
    let voxels = read_nifti(path)?;
    let sc_path = sidecar_path(path);
    let text = std::fs::read_to_string(&sc_path).map_err(|_| {
        Error::Metadata(format!(
            "missing diagnosis sidecar {} for {}",
            sc_path.display(),
            path.display()
        ))
    })?;
    let sc: Sidecar = serde_json::from_str(&text)
        .map_err(|e| Error::Metadata(format!("bad sidecar {}: {e}", sc_path.display())))?;
    Ok(Volume {
        voxels,
        subject_id: sc.subject_id,
        diagnosis: Diagnosis::parse(&sc.diagnosis)?,
        modality,
    })
}

/// Load a volume with metadata supplied by a manifest row.
pub fn load_volume_with_meta(
    path: &Path,
    subject_id: &str,
    diagnosis: Diagnosis,
    modality: Modality,
) -> Result<Volume> {
    Ok(Volume {
        voxels: read_nifti(path)?,
        subject_id: subject_id.to_string(),
        diagnosis,
        modality,
    })
}

/// Write the sidecar for `load_volume`.
pub fn write_sidecar(path: &Path, subject_id: &str, diagnosis: Diagnosis) -> Result<()> {
    let sc = Sidecar {
        subject_id: subject_id.to_string(),
        diagnosis: diagnosis.as_str().to_string(),
    };
    std::fs::write(sidecar_path(path), serde_json::to_string_pretty(&sc).unwrap())?;
    Ok(())
}
