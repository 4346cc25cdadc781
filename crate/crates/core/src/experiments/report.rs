use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::curves::CurvePoint;
use crate::dvrl::IterationRecord;
use crate::error::Result;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NamedCurve {
    pub name: String,
    pub points: Vec<CurvePoint>,
}

/// Machine-readable record of one experiment run.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub method: String,
    pub seed: u64,
    /// SHA-256 over the input files, in argument order.
    pub inputs_digest: String,
    pub config: serde_json::Value,
    pub metrics: BTreeMap<String, f64>,
    pub curves: Vec<NamedCurve>,
    pub traces: Vec<IterationRecord>,
}

pub fn digest_files<P: AsRef<Path>>(paths: &[P]) -> Result<String> {
    let mut hasher = Sha256::new();
    for p in paths {
        let bytes = fs::read(p)?;
        hasher.update((bytes.len() as u64).to_le_bytes());
        hasher.update(&bytes);
    }
    Ok(hex::encode(hasher.finalize()))
}

impl Report {
    pub fn write_json(&self, path: &Path) -> Result<()> {
        let mut text = serde_json::to_string_pretty(self)?;
        text.push('\n');
        fs::write(path, text)?;
        Ok(())
    }

    /// One `<name>.csv` (`fraction,value`) per curve in `dir`.
    pub fn write_curve_csvs(&self, dir: &Path) -> Result<()> {
        for curve in &self.curves {
            write_curve_csv(&dir.join(format!("{}.csv", curve.name)), &curve.points)?;
        }
        Ok(())
    }
}

/// Skipped points are written with an empty value.
pub fn write_curve_csv(path: &Path, points: &[CurvePoint]) -> Result<()> {
    let mut out = String::from("fraction,value\n");
    for p in points {
        match p.value {
            Some(v) => out.push_str(&format!("{},{}\n", p.fraction, v)),
            None => out.push_str(&format!("{},\n", p.fraction)),
        }
    }
    fs::write(path, out)?;
    Ok(())
}

/// JSON lines, one per outer iteration.
pub fn write_trace_jsonl(path: &Path, trace: &[IterationRecord]) -> Result<()> {
    let mut out = String::new();
    for r in trace {
        out.push_str(&serde_json::to_string(r)?);
        out.push('\n');
    }
    fs::write(path, out)?;
    Ok(())
}
