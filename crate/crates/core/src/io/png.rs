//! 8-bit grayscale PNG output for difference maps and side-by-side panels.

use std::path::Path;

use ndarray::Array2;

use crate::error::{Error, Result};

fn to_u8(v: f64) -> u8 {
    (v.clamp(0.0, 1.0) * 255.0).round() as u8
}

/// Write a [0, 1]-scaled image as 8-bit grayscale PNG.
pub fn write_gray_png(path: &Path, img: &Array2<f64>) -> Result<()> {
    let (h, w) = img.dim();
    let data: Vec<u8> = img.iter().map(|&v| to_u8(v)).collect();
    let buf = image::GrayImage::from_raw(w as u32, h as u32, data)
        .ok_or_else(|| Error::Data("png buffer size mismatch".into()))?;
    if let Some(parent) = path.parent() {
        if !parent.as_os_str().is_empty() {
            std::fs::create_dir_all(parent)?;
        }
    }
    buf.save_with_format(path, image::ImageFormat::Png)
        .map_err(|e| Error::Data(format!("png encode {}: {e}", path.display())))
}

/// Side-by-side panel of [0, 1]-scaled images of equal shape.
pub fn write_panel_png(path: &Path, panels: &[&Array2<f64>]) -> Result<()> {
    if panels.is_empty() {
        return Err(Error::Data("empty panel list".into()));
    }
    let (h, w) = panels[0].dim();
    for p in panels {
        if p.dim() != (h, w) {
            return Err(Error::Shape("panel images must share a shape".into()));
        }
    }
    let mut combined = Array2::<f64>::zeros((h, w * panels.len()));
    for (i, p) in panels.iter().enumerate() {
        combined
            .slice_mut(ndarray::s![.., i * w..(i + 1) * w])
            .assign(p);
    }
    write_gray_png(path, &combined)
}
