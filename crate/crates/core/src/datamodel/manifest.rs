//! Manifest CSV: one row per subject with paths to the paired volumes.
//! Schema: `subject_id, diagnosis, mri_path, pet_path`.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use super::Diagnosis;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub subject_id: String,
    pub diagnosis: Diagnosis,
    pub mri_path: String,
    pub pet_path: String,
}

pub fn read_manifest(path: &Path) -> Result<Vec<ManifestEntry>> {
    let mut rdr = csv::Reader::from_path(path)
        .map_err(|e| Error::Data(format!("cannot open manifest {}: {e}", path.display())))?;
    {
        let headers = rdr
            .headers()
            .map_err(|e| Error::Data(format!("manifest header: {e}")))?;
        let expect = ["subject_id", "diagnosis", "mri_path", "pet_path"];
        let got: Vec<&str> = headers.iter().collect();
        if got != expect {
            return Err(Error::Data(format!(
                "manifest header {:?} does not match {:?}",
                got, expect
            )));
        }
    }
    let mut out = Vec::new();
    for rec in rdr.records() {
        let rec = rec.map_err(|e| Error::Data(format!("manifest row: {e}")))?;
        if rec.len() != 4 {
            return Err(Error::Data(format!("manifest row has {} fields", rec.len())));
        }
        out.push(ManifestEntry {
            subject_id: rec[0].to_string(),
            diagnosis: Diagnosis::parse(&rec[1])?,
            mri_path: rec[2].to_string(),
            pet_path: rec[3].to_string(),
        });
    }
    if out.is_empty() {
        return Err(Error::Data(format!("manifest {} has no rows", path.display())));
    }
    Ok(out)
}

pub fn write_manifest(path: &Path, entries: &[ManifestEntry]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)
        .map_err(|e| Error::Data(format!("cannot write manifest {}: {e}", path.display())))?;
    w.write_record(["subject_id", "diagnosis", "mri_path", "pet_path"])
        .map_err(|e| Error::Data(format!("manifest write: {e}")))?;
    for e in entries {
        w.write_record([
            e.subject_id.as_str(),
            e.diagnosis.as_str(),
            e.mri_path.as_str(),
            e.pet_path.as_str(),
        ])
        .map_err(|e| Error::Data(format!("manifest write: {e}")))?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn manifest_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("manifest.csv");
        let entries = vec![
            ManifestEntry {
                subject_id: "s1".into(),
                diagnosis: Diagnosis::CN,
                mri_path: "vols/s1_mri.nii.gz".into(),
                pet_path: "vols/s1_pet.nii.gz".into(),
            },
            ManifestEntry {
                subject_id: "s2".into(),
                diagnosis: Diagnosis::AD,
                mri_path: "vols/s2_mri.nii.gz".into(),
                pet_path: "vols/s2_pet.nii.gz".into(),
            },
        ];
        write_manifest(&p, &entries).unwrap();
        let back = read_manifest(&p).unwrap();
        assert_eq!(back.len(), 2);
        assert_eq!(back[0].subject_id, "s1");
        assert_eq!(back[1].diagnosis, Diagnosis::AD);
    }

    #[test]
    fn rejects_wrong_header() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("bad.csv");
        std::fs::write(&p, "id,dx\n1,CN\n").unwrap();
        assert!(matches!(read_manifest(&p), Err(Error::Data(_))));
    }
}
