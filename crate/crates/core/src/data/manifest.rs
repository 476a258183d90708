//! Benchmark identities and the dataset manifest.

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::sync::Mutex;

use serde::{Deserialize, Serialize};

use super::csv_io::{load_csv, CsvSchema};
use super::hankel::{LagStructure, MAX_LAG};
use super::series::{split_train_val, TimeSeries};
use crate::error::{Error, Result};

pub const MANIFEST_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BenchmarkId {
    Silverbox,
    WienerHammerstein,
    Emps,
    CascadedTanks,
    Ced,
}

impl BenchmarkId {
    /// Column order of the baseline results table.
    pub const ALL: [BenchmarkId; 5] = [
        BenchmarkId::Silverbox,
        BenchmarkId::WienerHammerstein,
        BenchmarkId::Emps,
        BenchmarkId::CascadedTanks,
        BenchmarkId::Ced,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            BenchmarkId::Silverbox => "silverbox",
            BenchmarkId::WienerHammerstein => "wiener_hammerstein",
            BenchmarkId::Emps => "emps",
            BenchmarkId::CascadedTanks => "cascaded_tanks",
            BenchmarkId::Ced => "ced",
        }
    }

    pub fn display_name(&self) -> &'static str {
        match self {
            BenchmarkId::Silverbox => "Silverbox",
            BenchmarkId::WienerHammerstein => "W-H",
            BenchmarkId::Emps => "EMPS",
            BenchmarkId::CascadedTanks => "Cascaded Tanks",
            BenchmarkId::Ced => "CED",
        }
    }

    /// Named test sets, in table order.
    pub fn test_set_names(&self) -> &'static [&'static str] {
        match self {
            BenchmarkId::Silverbox => &["multisine", "arrow_full", "arrow_no_extrap"],
            BenchmarkId::Ced => &["test1", "test2"],
            _ => &["test"],
        }
    }

    /// Display unit and multiplier applied to RMSE values in physical units.
    pub fn report_unit(&self) -> (&'static str, f64) {
        match self {
            BenchmarkId::Silverbox | BenchmarkId::WienerHammerstein => ("mV", 1e3),
            BenchmarkId::Emps => ("mm", 1e3),
            BenchmarkId::CascadedTanks => ("V", 1.0),
            BenchmarkId::Ced => ("ticks/s", 1.0),
        }
    }

    /// Default state order for the LTI state-space baseline.
    pub fn default_state_order(&self) -> usize {
        match self {
            BenchmarkId::Silverbox => 2,
            BenchmarkId::WienerHammerstein => 6,
            BenchmarkId::Emps => 4,
            BenchmarkId::CascadedTanks => 2,
            BenchmarkId::Ced => 3,
        }
    }

    /// Published AR lag structures, used when lag selection is skipped.
    pub fn default_lags(&self) -> LagStructure {
        let (n_y, n_u) = match self {
            BenchmarkId::Silverbox => (10, 10),
            BenchmarkId::WienerHammerstein => (15, 8),
            BenchmarkId::Emps => (5, 16),
            BenchmarkId::CascadedTanks => (8, 9),
            BenchmarkId::Ced => (10, 10),
        };
        LagStructure { n_y, n_u }
    }

    /// The GP-NARX training subset is capped on these benchmarks.
    pub fn is_large(&self) -> bool {
        matches!(self, BenchmarkId::Silverbox | BenchmarkId::WienerHammerstein | BenchmarkId::Emps)
    }
}

impl fmt::Display for BenchmarkId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for BenchmarkId {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        BenchmarkId::ALL
            .iter()
            .copied()
            .find(|b| b.as_str() == s)
            .ok_or_else(|| Error::Config(format!("unknown benchmark id '{s}'")))
    }
}

/// A data file that is either present locally or fetchable by checksum.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct FileEntry {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub path: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub url: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sha256: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TestEntry {
    pub name: String,
    #[serde(flatten)]
    pub file: FileEntry,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetEntry {
    pub benchmark_id: BenchmarkId,
    pub sample_time: f64,
    pub report_unit: String,
    pub report_scale: f64,
    #[serde(default = "default_input_column")]
    pub input_column: String,
    #[serde(default = "default_output_column")]
    pub output_column: String,
    pub train: FileEntry,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub validation: Option<FileEntry>,
    pub tests: Vec<TestEntry>,
}

fn default_input_column() -> String {
    "u".into()
}

fn default_output_column() -> String {
    "y".into()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub manifest_version: u32,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cache_dir: Option<PathBuf>,
    #[serde(rename = "dataset")]
    pub datasets: Vec<DatasetEntry>,
    /// Directory the relative paths resolve against; not serialised.
    #[serde(skip)]
    pub root: PathBuf,
}

impl DatasetManifest {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut m: DatasetManifest =
            toml::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        m.root = path.parent().map(Path::to_path_buf).unwrap_or_default();
        m.validate()?;
        Ok(m)
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string_pretty(self).map_err(|e| Error::Serde(e.to_string()))
    }

    pub fn validate(&self) -> Result<()> {
        if self.manifest_version != MANIFEST_VERSION {
            return Err(Error::Config(format!(
                "manifest version {} unsupported (expected {MANIFEST_VERSION})",
                self.manifest_version
            )));
        }
        for d in &self.datasets {
            if d.report_scale != 1.0 && d.report_scale != 1e3 {
                return Err(Error::Config(format!("{}: report_scale must be 1 or 1000", d.benchmark_id)));
            }
            if !(d.sample_time > 0.0) {
                return Err(Error::Config(format!("{}: sample_time must be positive", d.benchmark_id)));
            }
            if d.tests.is_empty() {
                return Err(Error::Config(format!("{}: no test sets listed", d.benchmark_id)));
            }
        }
        Ok(())
    }

    pub fn entry(&self, id: BenchmarkId) -> Result<&DatasetEntry> {
        self.datasets
            .iter()
            .find(|d| d.benchmark_id == id)
            .ok_or_else(|| Error::Config(format!("benchmark '{id}' not in manifest")))
    }

    pub fn cache_dir(&self) -> PathBuf {
        match &self.cache_dir {
            Some(p) if p.is_absolute() => p.clone(),
            Some(p) => self.root.join(p),
            None => self.root.join("cache"),
        }
    }

    /// Local location of a file entry: its explicit path, else its cache slot.
    pub fn resolve(&self, file: &FileEntry) -> Result<PathBuf> {
        if let Some(p) = &file.path {
            return Ok(if p.is_absolute() { p.clone() } else { self.root.join(p) });
        }
        match (&file.url, &file.sha256) {
            (Some(url), Some(sha)) => Ok(crate::harness::fetch::cache_path(&self.cache_dir(), url, sha)),
            _ => Err(Error::Config("file entry needs a path or a url with sha256".into())),
        }
    }
}

/// Training material: the only data any selection or fitting step sees.
#[derive(Debug, Clone)]
pub struct FitData {
    pub train: TimeSeries,
    pub validation: TimeSeries,
}

/// One read of the held-out test records.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TestAccess {
    pub stage: String,
}

/// Held-out test records with an access log.
#[derive(Debug)]
pub struct TestSets {
    sets: Vec<(String, TimeSeries)>,
    log: Mutex<Vec<TestAccess>>,
}

impl TestSets {
    pub fn new(sets: Vec<(String, TimeSeries)>) -> Self {
        TestSets { sets, log: Mutex::new(Vec::new()) }
    }

    pub fn names(&self) -> Vec<String> {
        self.sets.iter().map(|(n, _)| n.clone()).collect()
    }

    /// Hands out the records and logs the requesting stage.
    pub fn read(&self, stage: &str) -> &[(String, TimeSeries)] {
        self.log.lock().expect("access log poisoned").push(TestAccess { stage: stage.to_string() });
        &self.sets
    }

    pub fn access_log(&self) -> Vec<TestAccess> {
        self.log.lock().expect("access log poisoned").clone()
    }
}

#[derive(Debug)]
pub struct BenchmarkDataset {
    pub benchmark_id: BenchmarkId,
    pub fit: FitData,
    pub tests: TestSets,
    pub report_unit: String,
    pub report_scale: f64,
}

impl DatasetEntry {
    fn schema(&self) -> CsvSchema {
        CsvSchema { input: self.input_column.clone(), output: self.output_column.clone() }
    }

    /// Loads train and validation; the validation record is the training
    /// tail unless the manifest names a separate file.
    pub fn load_fit_data(&self, manifest: &DatasetManifest, val_fraction: f64) -> Result<FitData> {
        let schema = self.schema();
        let train_full = load_csv(&manifest.resolve(&self.train)?, &schema, self.sample_time)?;
        let (train, validation) = match &self.validation {
            Some(v) => (train_full, load_csv(&manifest.resolve(v)?, &schema, self.sample_time)?),
            None => {
                let max_lag = MAX_LAG.min(train_full.len().saturating_sub(1) / 4);
                split_train_val(&train_full, val_fraction, max_lag)?
            }
        };
        Ok(FitData { train, validation })
    }

    pub fn load_tests(&self, manifest: &DatasetManifest) -> Result<TestSets> {
        let schema = self.schema();
        let mut sets = Vec::with_capacity(self.tests.len());
        for t in &self.tests {
            let mut ts = load_csv(&manifest.resolve(&t.file)?, &schema, self.sample_time)?;
            ts.name = t.name.clone();
            sets.push((t.name.clone(), ts));
        }
        Ok(TestSets::new(sets))
    }

    pub fn load(&self, manifest: &DatasetManifest, val_fraction: f64) -> Result<BenchmarkDataset> {
        Ok(BenchmarkDataset {
            benchmark_id: self.benchmark_id,
            fit: self.load_fit_data(manifest, val_fraction)?,
            tests: self.load_tests(manifest)?,
            report_unit: self.report_unit.clone(),
            report_scale: self.report_scale,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const MANIFEST: &str = r#"
manifest_version = 1

[[dataset]]
benchmark_id = "silverbox"
sample_time = 0.0016384
report_unit = "mV"
report_scale = 1000.0
train = { path = "sb/train.csv" }

[[dataset.tests]]
name = "multisine"
path = "sb/multisine.csv"

[[dataset.tests]]
name = "arrow_full"
url = "https://example.invalid/arrow.csv"
sha256 = "00ff"
"#;

    #[test]
    fn parses_and_resolves() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("m.toml");
        std::fs::write(&p, MANIFEST).unwrap();
        let m = DatasetManifest::load(&p).unwrap();
        let e = m.entry(BenchmarkId::Silverbox).unwrap();
        assert_eq!(e.tests.len(), 2);
        assert_eq!(m.resolve(&e.train).unwrap(), dir.path().join("sb/train.csv"));
        let cached = m.resolve(&e.tests[1].file).unwrap();
        assert!(cached.starts_with(dir.path().join("cache")));
        assert!(m.entry(BenchmarkId::Emps).is_err());
    }

    #[test]
    fn rejects_bad_scale() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("m.toml");
        std::fs::write(&p, MANIFEST.replace("1000.0", "100.0")).unwrap();
        assert!(matches!(DatasetManifest::load(&p), Err(Error::Config(_))));
    }

    #[test]
    fn benchmark_ids_round_trip_strings() {
        for b in BenchmarkId::ALL {
            assert_eq!(b.as_str().parse::<BenchmarkId>().unwrap(), b);
        }
        assert!("nope".parse::<BenchmarkId>().is_err());
    }

    #[test]
    fn test_reads_are_logged() {
        let ts = TimeSeries::new("a", vec![1.0], vec![2.0], 1.0).unwrap();
        let sets = TestSets::new(vec![("a".into(), ts)]);
        assert!(sets.access_log().is_empty());
        let _ = sets.read("evaluate");
        assert_eq!(sets.access_log(), vec![TestAccess { stage: "evaluate".into() }]);
    }
}
