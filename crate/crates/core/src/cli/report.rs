//! The verification report and its emission to disk.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::error::{LabError, Result};
use crate::verifier::{CheckRecord, Status};

/// Extremal constants observed over a run; absent when no check produced one.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize)]
pub struct Constants {
    /// Smallest `C` the split estimate allowed at the proof `K`.
    pub c: Option<f64>,
    /// Largest `K` the split estimate needed at the proof `C`.
    pub k: Option<f64>,
    /// Largest potential bound the proof constants absorb.
    pub b_admissible: Option<f64>,
    /// Largest potential bound a checked field required.
    pub b_required: Option<f64>,
}

fn merge(a: Option<f64>, b: Option<f64>, pick: fn(f64, f64) -> f64) -> Option<f64> {
    match (a, b) {
        (Some(x), Some(y)) => Some(pick(x, y)),
        (x, None) => x,
        (None, y) => y,
    }
}

impl Constants {
    pub fn merge(self, o: Constants) -> Constants {
        Constants {
            c: merge(self.c, o.c, f64::min),
            k: merge(self.k, o.k, f64::max),
            b_admissible: merge(self.b_admissible, o.b_admissible, f64::min),
            b_required: merge(self.b_required, o.b_required, f64::max),
        }
    }
}

/// Output of one job before assembly.
#[derive(Clone, Debug, Default)]
pub struct Outcome {
    pub records: Vec<CheckRecord>,
    pub constants: Constants,
    pub notes: BTreeMap<String, String>,
    /// Extra files, as `(file name, contents)`.
    pub artifacts: Vec<(String, Vec<u8>)>,
}

impl Outcome {
    pub fn absorb(&mut self, o: Outcome) {
        self.records.extend(o.records);
        self.constants = self.constants.merge(o.constants);
        self.notes.extend(o.notes);
        self.artifacts.extend(o.artifacts);
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Environment {
    pub version: String,
    /// Seconds since the Unix epoch; not covered by the stability hash.
    pub timestamp: u64,
    /// SHA-256 of the report with the timestamp and this field left out.
    pub stability_hash: String,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct VerificationReport {
    pub schema: u32,
    pub command: String,
    pub config: serde_json::Value,
    pub status: Status,
    pub constants: Constants,
    pub notes: BTreeMap<String, String>,
    pub records: Vec<CheckRecord>,
    pub environment: Environment,
}

#[derive(Serialize)]
struct Stable<'a> {
    schema: u32,
    command: &'a str,
    config: &'a serde_json::Value,
    status: Status,
    constants: &'a Constants,
    notes: &'a BTreeMap<String, String>,
    records: &'a [CheckRecord],
    version: &'a str,
}

impl VerificationReport {
    /// Sorts the records by name and derives the overall status and hash.
    pub fn assemble(command: &str, config: serde_json::Value, outcome: &Outcome, timestamp: u64) -> Result<Self> {
        let mut records = outcome.records.clone();
        records.sort_by(|a, b| a.name.cmp(&b.name));
        let status = Status::from_bool(records.iter().all(|r| r.status != Status::Fail));
        let version = env!("CARGO_PKG_VERSION").to_string();
        let stable = Stable {
            schema: super::config::SCHEMA_VERSION,
            command,
            config: &config,
            status,
            constants: &outcome.constants,
            notes: &outcome.notes,
            records: &records,
            version: &version,
        };
        let bytes = serde_json::to_vec(&stable).map_err(|e| LabError::InvalidInput(e.to_string()))?;
        let digest = Sha256::digest(&bytes);
        let stability_hash = digest.iter().map(|b| format!("{b:02x}")).collect();
        Ok(VerificationReport {
            schema: super::config::SCHEMA_VERSION,
            command: command.to_string(),
            config,
            status,
            constants: outcome.constants,
            notes: outcome.notes.clone(),
            records,
            environment: Environment { version, timestamp, stability_hash },
        })
    }

    pub fn passed(&self) -> bool {
        self.status == Status::Pass
    }

    pub fn to_json(&self) -> Result<String> {
        serde_json::to_string_pretty(self).map_err(|e| LabError::InvalidInput(e.to_string()))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, clap::ValueEnum)]
pub enum Format {
    Json,
    CsvBundle,
}

fn io(path: &Path, e: impl std::fmt::Display) -> LabError {
    LabError::Io(format!("{}: {e}", path.display()))
}

/// File name for a record's series: the name with path-hostile characters replaced.
pub fn series_file_name(name: &str) -> String {
    let clean: String = name
        .chars()
        .map(|c| if c.is_ascii_alphanumeric() || matches!(c, '-' | '_' | '.' | '=') { c } else { '_' })
        .collect();
    format!("{clean}.csv")
}

/// One CSV with header `name,param,value` and a row per series point.
pub fn series_csv(record: &CheckRecord) -> Result<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["name", "param", "value"])?;
    for (x, y) in &record.series {
        w.write_record([record.name.clone(), format!("{x:e}"), format!("{y:e}")])?;
    }
    w.into_inner().map_err(|e| LabError::Io(e.to_string()))
}

/// Writes `report.json`, the artifacts, and for `CsvBundle` one CSV per
/// record with a series under `series/`. Returns the written paths.
pub fn emit(report: &VerificationReport, artifacts: &[(String, Vec<u8>)], out: &Path, format: Format) -> Result<Vec<PathBuf>> {
    fs::create_dir_all(out).map_err(|e| io(out, e))?;
    let mut written = Vec::new();
    let path = out.join("report.json");
    fs::write(&path, report.to_json()? + "\n").map_err(|e| io(&path, e))?;
    written.push(path);
    for (name, bytes) in artifacts {
        let path = out.join(name);
        fs::write(&path, bytes).map_err(|e| io(&path, e))?;
        written.push(path);
    }
    if format == Format::CsvBundle {
        let dir = out.join("series");
        fs::create_dir_all(&dir).map_err(|e| io(&dir, e))?;
        for r in report.records.iter().filter(|r| !r.series.is_empty()) {
            let path = dir.join(series_file_name(&r.name));
            fs::write(&path, series_csv(r)?).map_err(|e| io(&path, e))?;
            written.push(path);
        }
    }
    Ok(written)
}
