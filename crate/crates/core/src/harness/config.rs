//! Versioned TOML run configuration.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::models::{Hyper, ModelId};
use crate::data::BenchmarkId;
use crate::error::{Error, Result};

pub const CONFIG_VERSION: u32 = 1;

/// One `(benchmark, model)` grid cell.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct CellKey {
    pub benchmark: BenchmarkId,
    pub model: ModelId,
}

impl CellKey {
    /// Sort key placing cells in table order.
    pub fn order(&self) -> (usize, usize) {
        (
            BenchmarkId::ALL.iter().position(|b| *b == self.benchmark).unwrap_or(usize::MAX),
            ModelId::ALL.iter().position(|m| *m == self.model).unwrap_or(usize::MAX),
        )
    }

    pub fn file_stem(&self) -> String {
        format!("{}__{}", self.benchmark, self.model)
    }
}

impl std::fmt::Display for CellKey {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}/{}", self.benchmark, self.model)
    }
}

impl std::str::FromStr for CellKey {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        let (b, m) = s.split_once('/').ok_or_else(|| Error::Config(format!("cell '{s}' is not benchmark/model")))?;
        Ok(CellKey { benchmark: b.parse()?, model: m.parse()? })
    }
}

fn default_version() -> u32 {
    CONFIG_VERSION
}

fn default_val_fraction() -> f64 {
    0.2
}

fn default_workers() -> usize {
    1
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default = "default_version")]
    pub config_version: u32,
    pub manifest: PathBuf,
    pub benchmarks: Vec<BenchmarkId>,
    pub models: Vec<ModelId>,
    pub seed: u64,
    #[serde(default = "default_val_fraction")]
    pub val_fraction: f64,
    #[serde(default)]
    pub burn_in: usize,
    pub output_dir: PathBuf,
    #[serde(default = "default_workers")]
    pub workers: usize,
    /// Skip cells whose report already exists in `output_dir`.
    #[serde(default)]
    pub resume: bool,
    #[serde(default)]
    pub hyper: BTreeMap<ModelId, Hyper>,
    /// Cells whose test simulations are fed a non-finite input (fault injection).
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub inject_blowup: Vec<String>,
}

impl RunConfig {
    /// Parses a config; relative paths are taken relative to `base`.
    pub fn from_toml(text: &str, base: &Path) -> Result<Self> {
        let mut c: RunConfig = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        if c.manifest.is_relative() {
            c.manifest = base.join(&c.manifest);
        }
        if c.output_dir.is_relative() {
            c.output_dir = base.join(&c.output_dir);
        }
        c.validate()?;
        Ok(c)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml(&text, path.parent().unwrap_or(Path::new(".")))
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string_pretty(self).map_err(|e| Error::Serde(e.to_string()))
    }

    pub fn validate(&self) -> Result<()> {
        if self.config_version != CONFIG_VERSION {
            return Err(Error::Config(format!(
                "config version {} unsupported (expected {CONFIG_VERSION})",
                self.config_version
            )));
        }
        if self.benchmarks.is_empty() || self.models.is_empty() {
            return Err(Error::Config("benchmarks and models must be non-empty".into()));
        }
        if !(self.val_fraction > 0.0 && self.val_fraction < 1.0) {
            return Err(Error::Config(format!("val_fraction {} must lie in (0, 1)", self.val_fraction)));
        }
        if self.workers == 0 {
            return Err(Error::Config("workers must be at least 1".into()));
        }
        self.injected()?;
        Ok(())
    }

    pub fn injected(&self) -> Result<Vec<CellKey>> {
        self.inject_blowup.iter().map(|s| s.parse()).collect()
    }

    /// Grid cells in table order, duplicates removed.
    pub fn cells(&self) -> Vec<CellKey> {
        let mut cells: Vec<CellKey> = self
            .benchmarks
            .iter()
            .flat_map(|&benchmark| self.models.iter().map(move |&model| CellKey { benchmark, model }))
            .collect();
        cells.sort_by_key(|c| c.order());
        cells.dedup();
        cells
    }

    pub fn hyper_for(&self, model: ModelId) -> Hyper {
        self.hyper.get(&model).cloned().unwrap_or_default()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const BASE: &str = r#"
manifest = "data/manifest.toml"
benchmarks = ["silverbox", "ced"]
models = ["pnarx", "lti_arx"]
seed = 7
output_dir = "out"

[hyper.pnarx]
max_degree = 3
"#;

    #[test]
    fn parses_and_orders_cells() {
        let c = RunConfig::from_toml(BASE, Path::new("/w")).unwrap();
        assert_eq!(c.manifest, Path::new("/w/data/manifest.toml"));
        assert_eq!(c.val_fraction, 0.2);
        assert_eq!(c.burn_in, 0);
        let cells: Vec<String> = c.cells().iter().map(|k| k.to_string()).collect();
        assert_eq!(cells, ["silverbox/lti_arx", "silverbox/pnarx", "ced/lti_arx", "ced/pnarx"]);
        assert_eq!(c.hyper_for(ModelId::Pnarx).max_degree, Some(3));
    }

    #[test]
    fn rejects_unknown_model_and_missing_seed() {
        let bad = BASE.replace("\"pnarx\", ", "\"narmax\", ");
        assert!(matches!(RunConfig::from_toml(&bad, Path::new(".")), Err(Error::Config(_))));
        let unseeded = BASE.replace("seed = 7\n", "");
        let err = RunConfig::from_toml(&unseeded, Path::new(".")).unwrap_err().to_string();
        assert!(err.contains("seed"), "{err}");
    }

    #[test]
    fn rejects_bad_injection_cell() {
        let bad = format!("inject_blowup = [\"silverbox:pnarx\"]\n{BASE}");
        assert!(RunConfig::from_toml(&bad, Path::new(".")).is_err());
    }
}
