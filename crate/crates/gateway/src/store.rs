//! Line-delimited JSON persistence for predictions.

use std::collections::{HashMap, HashSet};
use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use crate::client::{GatewayError, RawPrediction};

/// Reads a predictions file; a missing file reads as empty.
pub fn read_predictions(path: &Path) -> Result<Vec<RawPrediction>, GatewayError> {
    let io = |source| GatewayError::Io { path: path.to_path_buf(), source };
    let file = match File::open(path) {
        Ok(f) => f,
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => return Ok(Vec::new()),
        Err(e) => return Err(io(e)),
    };
    let mut out = Vec::new();
    for (idx, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(io)?;
        if line.trim().is_empty() {
            continue;
        }
        let record = serde_json::from_str(&line).map_err(|e| GatewayError::Malformed {
            path: path.to_path_buf(),
            line: idx + 1,
            reason: e.to_string(),
        })?;
        out.push(record);
    }
    Ok(out)
}

/// The last record per sample id, in order of first appearance.
pub fn latest_by_id(records: &[RawPrediction]) -> Vec<&RawPrediction> {
    let mut index: HashMap<&str, usize> = HashMap::new();
    let mut out: Vec<&RawPrediction> = Vec::new();
    for r in records {
        match index.get(r.sample_id.as_str()) {
            Some(&i) => out[i] = r,
            None => {
                index.insert(&r.sample_id, out.len());
                out.push(r);
            }
        }
    }
    out
}

/// Ids whose latest record succeeded; these are skipped on resume.
pub fn completed_ids(records: &[RawPrediction]) -> HashSet<String> {
    latest_by_id(records)
        .into_iter()
        .filter(|r| r.error.is_none())
        .map(|r| r.sample_id.clone())
        .collect()
}

/// Append-only sink; every record is flushed as soon as it is written.
pub struct PredictionWriter {
    path: PathBuf,
    out: BufWriter<File>,
}

impl PredictionWriter {
    pub fn append(path: &Path) -> Result<Self, GatewayError> {
        let file = OpenOptions::new()
            .create(true)
            .append(true)
            .open(path)
            .map_err(|source| GatewayError::Io { path: path.to_path_buf(), source })?;
        Ok(PredictionWriter { path: path.to_path_buf(), out: BufWriter::new(file) })
    }

    pub fn write(&mut self, record: &RawPrediction) -> Result<(), GatewayError> {
        let line = serde_json::to_string(record).expect("prediction serializes");
        writeln!(self.out, "{line}")
            .and_then(|_| self.out.flush())
            .map_err(|source| GatewayError::Io { path: self.path.clone(), source })
    }
}
