//! Report structures: per-slice records, per-group aggregates and
//! classification tallies, with CSV and schema-versioned JSON output.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::datamodel::Diagnosis;
use crate::error::{Error, Result};

pub const REPORT_SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SliceRecord {
    pub subject_id: String,
    pub slice_index: usize,
    pub diagnosis: Diagnosis,
    pub mse: f64,
    pub psnr_db: f64,
    pub ssim: f64,
}

/// mean +/- std (population) for one metric.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct MeanStd {
    pub mean: f64,
    pub std: f64,
}

pub fn mean_std(values: &[f64]) -> MeanStd {
    if values.is_empty() {
        return MeanStd { mean: f64::NAN, std: f64::NAN };
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    MeanStd { mean, std: var.sqrt() }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GroupAggregate {
    /// One of ALL, CN, MCI, AD.
    pub group: String,
    pub n_slices: usize,
    pub n_subjects: usize,
    pub mse: MeanStd,
    pub psnr_db: MeanStd,
    pub ssim: MeanStd,
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize, PartialEq, Eq)]
pub struct Tally {
    pub correct: usize,
    pub total: usize,
}

impl Tally {
    pub fn accuracy(&self) -> f64 {
        if self.total == 0 {
            f64::NAN
        } else {
            self.correct as f64 / self.total as f64
        }
    }
}

/// Subject-level classification outcome for one evaluation source.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ClassificationTallies {
    /// "real" or "synthetic".
    pub source: String,
    pub overall: Tally,
    pub cn_group: Tally,
    pub mci_ad_group: Tally,
}

impl ClassificationTallies {
    pub fn validate(&self) -> Result<()> {
        let ok = self.overall.correct <= self.overall.total
            && self.cn_group.correct <= self.cn_group.total
            && self.mci_ad_group.correct <= self.mci_ad_group.total
            && self.cn_group.total + self.mci_ad_group.total == self.overall.total
            && self.cn_group.correct + self.mci_ad_group.correct == self.overall.correct;
        if ok {
            Ok(())
        } else {
            Err(Error::Data("inconsistent classification tallies".into()))
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MetricsReport {
    pub schema_version: u32,
    pub per_slice: Vec<SliceRecord>,
    pub aggregates: Vec<GroupAggregate>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub classification: Vec<ClassificationTallies>,
}

impl MetricsReport {
    pub fn new(per_slice: Vec<SliceRecord>) -> Self {
        let aggregates = aggregate(&per_slice);
        MetricsReport {
            schema_version: REPORT_SCHEMA_VERSION,
            per_slice,
            aggregates,
            classification: Vec::new(),
        }
    }

    pub fn group(&self, name: &str) -> Option<&GroupAggregate> {
        self.aggregates.iter().find(|g| g.group == name)
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path)
            .map_err(|e| Error::Data(format!("cannot write {}: {e}", path.display())))?;
        w.write_record(["subject_id", "slice_index", "diagnosis", "mse", "psnr_db", "ssim"])
            .map_err(|e| Error::Data(e.to_string()))?;
        for r in &self.per_slice {
            w.write_record([
                r.subject_id.clone(),
                r.slice_index.to_string(),
                r.diagnosis.as_str().to_string(),
                format!("{:.17e}", r.mse),
                format!("{:.17e}", r.psnr_db),
                format!("{:.17e}", r.ssim),
            ])
            .map_err(|e| Error::Data(e.to_string()))?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn write_json(&self, path: &Path) -> Result<()> {
        let text = serde_json::to_string_pretty(self)
            .map_err(|e| Error::Data(format!("report serialization: {e}")))?;
        std::fs::write(path, text + "\n")?;
        Ok(())
    }
}

/// Recompute the four aggregates (ALL plus the three diagnostic groups)
/// from per-slice records.
pub fn aggregate(records: &[SliceRecord]) -> Vec<GroupAggregate> {
    let mut buckets: BTreeMap<&'static str, Vec<&SliceRecord>> = BTreeMap::new();
    for r in records {
        buckets.entry("ALL").or_default().push(r);
        buckets
            .entry(r.diagnosis.synthesis_group().as_str())
            .or_default()
            .push(r);
    }
    let order = ["ALL", "CN", "MCI", "AD"];
    order
        .iter()
        .filter_map(|&name| {
            let rs = buckets.get(name)?;
            let mut subjects: Vec<&str> = rs.iter().map(|r| r.subject_id.as_str()).collect();
            subjects.sort_unstable();
            subjects.dedup();
            Some(GroupAggregate {
                group: name.to_string(),
                n_slices: rs.len(),
                n_subjects: subjects.len(),
                mse: mean_std(&rs.iter().map(|r| r.mse).collect::<Vec<_>>()),
                psnr_db: mean_std(&rs.iter().map(|r| r.psnr_db).collect::<Vec<_>>()),
                ssim: mean_std(&rs.iter().map(|r| r.ssim).collect::<Vec<_>>()),
            })
        })
        .collect()
}

/// Structural validation of a report JSON value against the shipped schema
/// (docs/report.schema.json): checks required keys and primitive types for
/// the schema subset this project emits.
pub fn validate_against_schema(report: &serde_json::Value, schema: &serde_json::Value) -> Result<()> {
    fn check(value: &serde_json::Value, schema: &serde_json::Value, path: &str) -> Result<()> {
        let ty = schema.get("type").and_then(|t| t.as_str()).unwrap_or("object");
        let fail = |msg: String| Err(Error::Data(format!("schema violation at {path}: {msg}")));
        match ty {
            "object" => {
                let obj = match value.as_object() {
                    Some(o) => o,
                    None => return fail("expected object".into()),
                };
                if let Some(req) = schema.get("required").and_then(|r| r.as_array()) {
                    for key in req {
                        let k = key.as_str().unwrap_or_default();
                        if !obj.contains_key(k) {
                            return fail(format!("missing required key '{k}'"));
                        }
                    }
                }
                if let Some(props) = schema.get("properties").and_then(|p| p.as_object()) {
                    for (k, sub) in props {
                        if let Some(v) = obj.get(k) {
                            check(v, sub, &format!("{path}.{k}"))?;
                        }
                    }
                }
                Ok(())
            }
            "array" => {
                let arr = match value.as_array() {
                    Some(a) => a,
                    None => return fail("expected array".into()),
                };
                if let Some(items) = schema.get("items") {
                    for (i, v) in arr.iter().enumerate() {
                        check(v, items, &format!("{path}[{i}]"))?;
                    }
                }
                Ok(())
            }
            "number" => {
                if value.is_number() {
                    Ok(())
                } else {
                    fail("expected number".into())
                }
            }
            "integer" => {
                if value.is_i64() || value.is_u64() {
                    Ok(())
                } else {
                    fail("expected integer".into())
                }
            }
            "string" => {
                if value.is_string() {
                    Ok(())
                } else {
                    fail("expected string".into())
                }
            }
            other => fail(format!("unsupported schema type '{other}'")),
        }
    }
    check(report, schema, "$")
}

#[cfg(test)]
mod tests {
    use super::*;

    fn record(s: &str, idx: usize, dx: Diagnosis, m: f64) -> SliceRecord {
        SliceRecord {
            subject_id: s.into(),
            slice_index: idx,
            diagnosis: dx,
            mse: m,
            psnr_db: 10.0 - m,
            ssim: 1.0 - m,
        }
    }

    #[test]
    fn aggregates_recompute_from_records() {
        let records = vec![
            record("a", 76, Diagnosis::CN, 0.1),
            record("a", 86, Diagnosis::CN, 0.3),
            record("b", 76, Diagnosis::SMC, 0.2),
            record("c", 76, Diagnosis::EMCI, 0.4),
            record("d", 76, Diagnosis::AD, 0.6),
        ];
        let report = MetricsReport::new(records);
        let all = report.group("ALL").unwrap();
        assert_eq!(all.n_slices, 5);
        assert_eq!(all.n_subjects, 4);
        assert!((all.mse.mean - 0.32).abs() < 1e-12);
        let cn = report.group("CN").unwrap();
        assert_eq!(cn.n_slices, 3, "SMC reports inside the CN group");
        assert_eq!(cn.n_subjects, 2);
        let mci = report.group("MCI").unwrap();
        assert_eq!(mci.n_slices, 1);
        let ad = report.group("AD").unwrap();
        assert_eq!(ad.n_slices, 1);
        // recompute by hand
        let expect = mean_std(&[0.1, 0.3, 0.2]);
        assert!((cn.mse.mean - expect.mean).abs() < 1e-15);
        assert!((cn.mse.std - expect.std).abs() < 1e-15);
    }

    #[test]
    fn tally_consistency() {
        let good = ClassificationTallies {
            source: "real".into(),
            overall: Tally { correct: 28, total: 44 },
            cn_group: Tally { correct: 19, total: 26 },
            mci_ad_group: Tally { correct: 9, total: 18 },
        };
        good.validate().unwrap();
        let bad = ClassificationTallies {
            overall: Tally { correct: 27, total: 44 },
            ..good.clone()
        };
        assert!(bad.validate().is_err());
    }

    #[test]
    fn csv_round_trip_preserves_aggregates() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("slices.csv");
        let report = MetricsReport::new(vec![
            record("a", 76, Diagnosis::CN, 0.123456789012345),
            record("b", 99, Diagnosis::AD, 1.0 / 3.0),
        ]);
        report.write_csv(&p).unwrap();
        let mut rdr = csv::Reader::from_path(&p).unwrap();
        let mut recs = Vec::new();
        for row in rdr.records() {
            let row = row.unwrap();
            recs.push(SliceRecord {
                subject_id: row[0].into(),
                slice_index: row[1].parse().unwrap(),
                diagnosis: Diagnosis::parse(&row[2]).unwrap(),
                mse: row[3].parse().unwrap(),
                psnr_db: row[4].parse().unwrap(),
                ssim: row[5].parse().unwrap(),
            });
        }
        let re = aggregate(&recs);
        for (a, b) in report.aggregates.iter().zip(re.iter()) {
            assert!((a.mse.mean - b.mse.mean).abs() < 1e-9);
            assert!((a.psnr_db.std - b.psnr_db.std).abs() < 1e-9);
        }
    }
}
