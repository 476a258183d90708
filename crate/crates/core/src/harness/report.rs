//! Per-cell evaluation reports and their on-disk store.

use std::fs::{self, OpenOptions};
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::config::CellKey;
use super::models::{ModelId, Selection};
use crate::data::BenchmarkId;
use crate::error::{Error, Result};

pub const REPORT_VERSION: u32 = 1;
pub const TOOLKIT_VERSION: &str = env!("CARGO_PKG_VERSION");

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TestScore {
    pub name: String,
    /// Physical units; absent when the simulation failed.
    pub rmse: Option<f64>,
    /// `rmse × report_scale`.
    pub display_rmse: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub blowup_index: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

impl TestScore {
    pub fn ok(name: &str, rmse: f64, scale: f64) -> Self {
        TestScore { name: name.into(), rmse: Some(rmse), display_rmse: Some(rmse * scale), blowup_index: None, error: None }
    }

    pub fn failed(name: &str, err: &Error) -> Self {
        let blowup_index = match err {
            Error::SimulationBlowUp { index } => Some(*index),
            _ => None,
        };
        TestScore { name: name.into(), rmse: None, display_rmse: None, blowup_index, error: Some(err.to_string()) }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum CellStatus {
    Ok,
    /// Some test simulations failed; the others are scored.
    Partial,
    Failed { stage: String, message: String },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub report_version: u32,
    pub benchmark_id: BenchmarkId,
    pub model_id: ModelId,
    pub report_unit: String,
    pub report_scale: f64,
    pub tests: Vec<TestScore>,
    pub selected: Selection,
    pub train_seconds: f64,
    pub seed: u64,
    #[serde(flatten)]
    pub status: CellStatus,
    pub toolkit_version: String,
}

impl EvalReport {
    pub fn key(&self) -> CellKey {
        CellKey { benchmark: self.benchmark_id, model: self.model_id }
    }

    pub fn score(&self, test: &str) -> Option<&TestScore> {
        self.tests.iter().find(|t| t.name == test)
    }

    /// A copy with wall-clock time zeroed, for reproducibility comparisons.
    pub fn without_timing(&self) -> Self {
        EvalReport { train_seconds: 0.0, ..self.clone() }
    }

    pub fn check(&self) -> Result<()> {
        for t in &self.tests {
            match (t.rmse, t.display_rmse) {
                (Some(r), Some(d)) if r >= 0.0 && d == r * self.report_scale => {}
                (None, None) => {}
                _ => return Err(Error::Serde(format!("{}: inconsistent score for {}", self.key(), t.name))),
            }
        }
        Ok(())
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)? + "\n")
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IndexEntry {
    pub benchmark_id: BenchmarkId,
    pub model_id: ModelId,
    pub file: String,
    pub ok: bool,
}

/// `reports/<benchmark>__<model>.json` plus an append-only `index.jsonl`.
#[derive(Debug, Clone)]
pub struct ReportStore {
    pub root: PathBuf,
}

impl ReportStore {
    pub fn new(root: &Path) -> Result<Self> {
        let dir = root.join("reports");
        fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
        Ok(ReportStore { root: root.to_path_buf() })
    }

    pub fn report_path(&self, key: &CellKey) -> PathBuf {
        self.root.join("reports").join(format!("{}.json", key.file_stem()))
    }

    pub fn model_path(&self, key: &CellKey) -> PathBuf {
        self.root.join("models").join(format!("{}.json", key.file_stem()))
    }

    pub fn index_path(&self) -> PathBuf {
        self.root.join("index.jsonl")
    }

    /// Writes the report atomically, then appends an index line.
    pub fn write(&self, report: &EvalReport) -> Result<PathBuf> {
        let path = self.report_path(&report.key());
        let tmp = path.with_extension("json.tmp");
        fs::write(&tmp, report.to_json()?).map_err(|e| Error::io(&tmp, e))?;
        fs::rename(&tmp, &path).map_err(|e| Error::io(&path, e))?;
        let entry = IndexEntry {
            benchmark_id: report.benchmark_id,
            model_id: report.model_id,
            file: path.file_name().expect("report file name").to_string_lossy().into_owned(),
            ok: !matches!(report.status, CellStatus::Failed { .. }),
        };
        let idx = self.index_path();
        let mut f = OpenOptions::new().create(true).append(true).open(&idx).map_err(|e| Error::io(&idx, e))?;
        writeln!(f, "{}", serde_json::to_string(&entry)?).map_err(|e| Error::io(&idx, e))?;
        Ok(path)
    }

    pub fn read(&self, key: &CellKey) -> Result<Option<EvalReport>> {
        let path = self.report_path(key);
        if !path.exists() {
            return Ok(None);
        }
        load_report(&path).map(Some)
    }

    /// Every report in the store, in table order.
    pub fn load_all(&self) -> Result<Vec<EvalReport>> {
        load_reports(&self.root.join("reports"))
    }
}

pub fn load_report(path: &Path) -> Result<EvalReport> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let r: EvalReport = serde_json::from_str(&text)?;
    if r.report_version != REPORT_VERSION {
        return Err(Error::Serde(format!("{}: unsupported report version {}", path.display(), r.report_version)));
    }
    r.check()?;
    Ok(r)
}

/// Loads all `*.json` reports from a directory, sorted by cell.
pub fn load_reports(dir: &Path) -> Result<Vec<EvalReport>> {
    let mut out = Vec::new();
    for entry in fs::read_dir(dir).map_err(|e| Error::io(dir, e))? {
        let path = entry.map_err(|e| Error::io(dir, e))?.path();
        if path.extension().is_some_and(|e| e == "json") {
            out.push(load_report(&path)?);
        }
    }
    out.sort_by_key(|r| r.key().order());
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    pub(crate) fn sample(benchmark: BenchmarkId, model: ModelId, rmse: f64) -> EvalReport {
        let (unit, scale) = benchmark.report_unit();
        EvalReport {
            report_version: REPORT_VERSION,
            benchmark_id: benchmark,
            model_id: model,
            report_unit: unit.into(),
            report_scale: scale,
            tests: benchmark.test_set_names().iter().map(|n| TestScore::ok(n, rmse, scale)).collect(),
            selected: Selection::new(),
            train_seconds: 1.5,
            seed: 3,
            status: CellStatus::Ok,
            toolkit_version: TOOLKIT_VERSION.into(),
        }
    }

    #[test]
    fn store_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let store = ReportStore::new(dir.path()).unwrap();
        let a = sample(BenchmarkId::Ced, ModelId::Pnarx, 0.123456789);
        let b = sample(BenchmarkId::Silverbox, ModelId::LtiArx, 0.00695);
        store.write(&a).unwrap();
        store.write(&b).unwrap();
        let all = store.load_all().unwrap();
        assert_eq!(all, vec![b.clone(), a.clone()]);
        assert_eq!(store.read(&a.key()).unwrap(), Some(a));
        let lines = fs::read_to_string(store.index_path()).unwrap();
        assert_eq!(lines.lines().count(), 2);
    }

    #[test]
    fn display_is_scaled_rmse() {
        let r = sample(BenchmarkId::Silverbox, ModelId::GpNarx, 0.000301);
        r.check().unwrap();
        assert_eq!(r.tests[0].display_rmse, Some(0.000301 * 1e3));
        let mut bad = r.clone();
        bad.tests[0].display_rmse = Some(1.0);
        assert!(bad.check().is_err());
    }

    #[test]
    fn blowup_is_recorded() {
        let s = TestScore::failed("test", &Error::SimulationBlowUp { index: 42 });
        assert_eq!(s.blowup_index, Some(42));
        assert!(s.rmse.is_none());
    }
}
