//! Versioned binary checkpoint: a flat list of named f64 tensors plus run
//! metadata. Writing and re-reading is bitwise exact; loading refuses
//! unknown versions and mismatched config hashes.

use std::collections::HashMap;
use std::io::{Read, Write};
use std::path::Path;

use ndarray::{ArrayD, IxDyn};

use crate::error::{Error, Result};

const MAGIC: &[u8; 8] = b"MCRVQCK\x01";
const VERSION: u32 = 1;

#[derive(Debug, Clone)]
pub struct Checkpoint {
    pub kind: String,
    pub config_hash: [u8; 32],
    pub epoch: u64,
    pub root_seed: u64,
    pub tensors: Vec<(String, ArrayD<f64>)>,
}

impl Checkpoint {
    pub fn tensor_map(&self) -> HashMap<String, ArrayD<f64>> {
        self.tensors.iter().cloned().collect()
    }

    /// Tensors under `prefix/`, with the prefix stripped.
    pub fn tensors_with_prefix(&self, prefix: &str) -> HashMap<String, ArrayD<f64>> {
        let full = format!("{prefix}/");
        self.tensors
            .iter()
            .filter_map(|(n, t)| n.strip_prefix(&full).map(|s| (s.to_string(), t.clone())))
            .collect()
    }

    pub fn scalar(&self, name: &str) -> Result<f64> {
        self.tensors
            .iter()
            .find(|(n, _)| n == name)
            .and_then(|(_, t)| t.iter().next().copied())
            .ok_or_else(|| Error::Checkpoint(format!("missing scalar '{name}'")))
    }
}

pub fn save_checkpoint(path: &Path, ckpt: &Checkpoint) -> Result<()> {
    let mut buf: Vec<u8> = Vec::new();
    buf.extend_from_slice(MAGIC);
    buf.extend_from_slice(&VERSION.to_le_bytes());
    let kind = ckpt.kind.as_bytes();
    buf.extend_from_slice(&(kind.len() as u16).to_le_bytes());
    buf.extend_from_slice(kind);
    buf.extend_from_slice(&ckpt.config_hash);
    buf.extend_from_slice(&ckpt.epoch.to_le_bytes());
    buf.extend_from_slice(&ckpt.root_seed.to_le_bytes());
    buf.extend_from_slice(&(ckpt.tensors.len() as u32).to_le_bytes());
    for (name, t) in &ckpt.tensors {
        let nb = name.as_bytes();
        buf.extend_from_slice(&(nb.len() as u16).to_le_bytes());
        buf.extend_from_slice(nb);
        buf.push(t.ndim() as u8);
        for &d in t.shape() {
            buf.extend_from_slice(&(d as u64).to_le_bytes());
        }
        let flat = t.as_standard_layout();
        for v in flat.iter() {
            buf.extend_from_slice(&v.to_le_bytes());
        }
    }
    if let Some(parent) = path.parent() {
        if !parent.as_os_str().is_empty() {
            std::fs::create_dir_all(parent)?;
        }
    }
    let mut f = std::fs::File::create(path)?;
    f.write_all(&buf)?;
    Ok(())
}

pub fn load_checkpoint(path: &Path) -> Result<Checkpoint> {
    let mut buf = Vec::new();
    std::fs::File::open(path)
        .map_err(|e| Error::Checkpoint(format!("cannot open {}: {e}", path.display())))?
        .read_to_end(&mut buf)?;
    let mut off = 0usize;
    let take = |off: &mut usize, n: usize| -> Result<&[u8]> {
        if *off + n > buf.len() {
            return Err(Error::Checkpoint("truncated checkpoint".into()));
        }
        let s = &buf[*off..*off + n];
        *off += n;
        Ok(s)
    };
    if take(&mut off, 8)? != MAGIC {
        return Err(Error::Checkpoint(format!(
            "{}: not a checkpoint file (bad magic)",
            path.display()
        )));
    }
    let version = u32::from_le_bytes(take(&mut off, 4)?.try_into().unwrap());
    if version != VERSION {
        return Err(Error::Checkpoint(format!(
            "unsupported checkpoint version {version} (expected {VERSION})"
        )));
    }
    let kind_len = u16::from_le_bytes(take(&mut off, 2)?.try_into().unwrap()) as usize;
    let kind = String::from_utf8(take(&mut off, kind_len)?.to_vec())
        .map_err(|_| Error::Checkpoint("bad kind string".into()))?;
    let config_hash: [u8; 32] = take(&mut off, 32)?.try_into().unwrap();
    let epoch = u64::from_le_bytes(take(&mut off, 8)?.try_into().unwrap());
    let root_seed = u64::from_le_bytes(take(&mut off, 8)?.try_into().unwrap());
    let n_tensors = u32::from_le_bytes(take(&mut off, 4)?.try_into().unwrap()) as usize;
    let mut tensors = Vec::with_capacity(n_tensors);
    for _ in 0..n_tensors {
        let name_len = u16::from_le_bytes(take(&mut off, 2)?.try_into().unwrap()) as usize;
        let name = String::from_utf8(take(&mut off, name_len)?.to_vec())
            .map_err(|_| Error::Checkpoint("bad tensor name".into()))?;
        let ndim = take(&mut off, 1)?[0] as usize;
        let mut shape = Vec::with_capacity(ndim);
        for _ in 0..ndim {
            shape.push(u64::from_le_bytes(take(&mut off, 8)?.try_into().unwrap()) as usize);
        }
        let n: usize = shape.iter().product();
        let bytes = take(&mut off, 8 * n)?;
        let data: Vec<f64> = bytes
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect();
        tensors.push((
            name,
            ArrayD::from_shape_vec(IxDyn(&shape), data)
                .map_err(|e| Error::Checkpoint(format!("tensor shape: {e}")))?,
        ));
    }
    if off != buf.len() {
        return Err(Error::Checkpoint("trailing bytes in checkpoint".into()));
    }
    Ok(Checkpoint {
        kind,
        config_hash,
        epoch,
        root_seed,
        tensors,
    })
}

/// Enforce kind and config-hash compatibility before using a checkpoint.
pub fn verify_compat(ckpt: &Checkpoint, kind: &str, config_hash: &[u8; 32]) -> Result<()> {
    if ckpt.kind != kind {
        return Err(Error::Checkpoint(format!(
            "checkpoint kind '{}' does not match expected '{kind}'",
            ckpt.kind
        )));
    }
    if &ckpt.config_hash != config_hash {
        return Err(Error::Checkpoint(
            "checkpoint config hash does not match the active config".into(),
        ));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> Checkpoint {
        Checkpoint {
            kind: "gan".into(),
            config_hash: [7u8; 32],
            epoch: 42,
            root_seed: 9,
            tensors: vec![
                (
                    "gen/param/a.w".into(),
                    ArrayD::from_shape_vec(IxDyn(&[2, 3]), vec![0.1, -0.2, 0.3, 1e-300, -0.0, f64::MIN_POSITIVE]).unwrap(),
                ),
                ("opt/t".into(), ArrayD::from_elem(IxDyn(&[]), 17.0)),
            ],
        }
    }

    #[test]
    fn save_load_save_is_bitwise_identical() {
        let dir = tempfile::tempdir().unwrap();
        let p1 = dir.path().join("a.ckpt");
        let p2 = dir.path().join("b.ckpt");
        let ck = sample();
        save_checkpoint(&p1, &ck).unwrap();
        let back = load_checkpoint(&p1).unwrap();
        save_checkpoint(&p2, &back).unwrap();
        let b1 = std::fs::read(&p1).unwrap();
        let b2 = std::fs::read(&p2).unwrap();
        assert_eq!(b1, b2, "round-trip must be bitwise identical");
        assert_eq!(back.epoch, 42);
        assert_eq!(back.kind, "gan");
    }

    #[test]
    fn rejects_bad_magic_version_and_hash() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("x.ckpt");
        save_checkpoint(&p, &sample()).unwrap();

        let mut bytes = std::fs::read(&p).unwrap();
        bytes[0] = b'X';
        std::fs::write(&p, &bytes).unwrap();
        assert!(matches!(load_checkpoint(&p), Err(Error::Checkpoint(_))));

        save_checkpoint(&p, &sample()).unwrap();
        let mut bytes = std::fs::read(&p).unwrap();
        bytes[8] = 99; // version
        std::fs::write(&p, &bytes).unwrap();
        assert!(matches!(load_checkpoint(&p), Err(Error::Checkpoint(_))));

        save_checkpoint(&p, &sample()).unwrap();
        let ck = load_checkpoint(&p).unwrap();
        assert!(verify_compat(&ck, "gan", &[7u8; 32]).is_ok());
        assert!(verify_compat(&ck, "gan", &[8u8; 32]).is_err());
        assert!(verify_compat(&ck, "classifier", &[7u8; 32]).is_err());
    }
}
