//! Desk-scale stand-ins for the benchmark datasets, written with a manifest
//! so the full pipeline can run without network access.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::data::synthetic::{random_phase_multisine, white_noise};
use crate::data::{
    generate_synthetic, write_csv, BenchmarkId, CsvSchema, DatasetEntry, DatasetManifest, FileEntry, SyntheticKind,
    SyntheticSystemSpec, TestEntry, MANIFEST_VERSION,
};
use crate::error::{Error, Result};
use crate::kernels::derive_seed;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SurrogateScale {
    pub train_len: usize,
    pub test_len: usize,
}

impl Default for SurrogateScale {
    fn default() -> Self {
        SurrogateScale { train_len: 1200, test_len: 600 }
    }
}

struct Recipe {
    kind: SyntheticKind,
    sample_time: f64,
    noise: f64,
    offset: f64,
    rms: f64,
    band: f64,
}

fn recipe(b: BenchmarkId) -> Recipe {
    match b {
        BenchmarkId::Silverbox => Recipe {
            kind: SyntheticKind::DuffingRk4 { mass: 1.0, damping: 0.3, stiffness: 1.0, cubic: 1.5, gain: 1.0 },
            sample_time: 0.3,
            noise: 1e-3,
            offset: 0.0,
            rms: 0.5,
            band: 0.4,
        },
        BenchmarkId::WienerHammerstein => Recipe {
            kind: SyntheticKind::LinearSecondOrder { radius: 0.9, angle: 0.4, gain: 1.0 },
            sample_time: 1.0,
            noise: 1e-2,
            offset: 0.0,
            rms: 1.0,
            band: 1.0,
        },
        BenchmarkId::Emps => Recipe {
            kind: SyntheticKind::KnownArx { a: vec![1.6, -0.7], b: vec![0.0, 0.1] },
            sample_time: 0.005,
            noise: 1e-3,
            offset: 0.0,
            rms: 1.0,
            band: 0.5,
        },
        BenchmarkId::CascadedTanks => Recipe {
            kind: SyntheticKind::CascadedTanksOde {
                k1: 0.1,
                k2: 0.1,
                k3: 0.1,
                k4: 0.05,
                level_max: 10.0,
                initial_levels: [2.0, 2.0],
            },
            sample_time: 4.0,
            noise: 1e-2,
            offset: 3.0,
            rms: 1.0,
            band: 0.3,
        },
        BenchmarkId::Ced => Recipe {
            kind: SyntheticKind::DuffingRk4 { mass: 1.0, damping: 0.5, stiffness: 2.0, cubic: 0.5, gain: 1.0 },
            sample_time: 0.2,
            noise: 1e-3,
            offset: 0.0,
            rms: 0.8,
            band: 0.3,
        },
    }
}

fn input(r: &Recipe, n: usize, seed: u64, envelope: Option<f64>) -> Vec<f64> {
    let mut u = match envelope {
        // low-passed noise under a linearly growing envelope
        Some(peak) => {
            let mut s = 0.0;
            white_noise(n, r.rms, seed)
                .into_iter()
                .enumerate()
                .map(|(t, v)| {
                    s = 0.7 * s + 0.3 * v;
                    s * peak * t as f64 / n as f64
                })
                .collect()
        }
        None => random_phase_multisine(n, 40, r.band, r.rms, seed),
    };
    if r.offset > 0.0 {
        for v in &mut u {
            *v = (*v + r.offset).max(0.0);
        }
    }
    u
}

/// Writes train and test CSVs for each benchmark under `dir` plus
/// `dir/manifest.toml`, and returns the manifest path.
pub fn write_surrogates(dir: &Path, benchmarks: &[BenchmarkId], scale: SurrogateScale, seed: u64) -> Result<PathBuf> {
    if benchmarks.is_empty() {
        return Err(Error::invalid("no benchmarks requested"));
    }
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let schema = CsvSchema::default();
    let mut datasets = Vec::new();
    for (bi, &b) in benchmarks.iter().enumerate() {
        let r = recipe(b);
        let make = |name: &str, n: usize, tag: u64, shaped: Option<f64>| -> Result<String> {
            let s = derive_seed(seed, &[bi as u64, tag]);
            let u = input(&r, n, s, shaped);
            let spec = SyntheticSystemSpec::new(r.kind.clone(), r.noise, s.wrapping_add(1));
            let mut ts = generate_synthetic(&spec, &u, r.sample_time)?;
            ts.name = name.into();
            let file = format!("{}_{name}.csv", b.as_str());
            write_csv(&dir.join(&file), &schema, &ts)?;
            Ok(file)
        };
        let train = make("train", scale.train_len, 0, None)?;
        let mut tests = Vec::new();
        for (ti, &t) in b.test_set_names().iter().enumerate() {
            let shaped = match t {
                "arrow_full" => Some(2.0),
                "arrow_no_extrap" => Some(1.2),
                _ => None,
            };
            let file = make(t, scale.test_len, 1 + ti as u64, shaped)?;
            tests.push(TestEntry { name: t.into(), file: FileEntry { path: Some(file.into()), url: None, sha256: None } });
        }
        let (unit, scale_factor) = b.report_unit();
        datasets.push(DatasetEntry {
            benchmark_id: b,
            sample_time: r.sample_time,
            report_unit: unit.into(),
            report_scale: scale_factor,
            input_column: schema.input.clone(),
            output_column: schema.output.clone(),
            train: FileEntry { path: Some(train.into()), url: None, sha256: None },
            validation: None,
            tests,
        });
    }
    let manifest = DatasetManifest { manifest_version: MANIFEST_VERSION, cache_dir: None, datasets, root: dir.into() };
    let path = dir.join("manifest.toml");
    std::fs::write(&path, manifest.to_toml()?).map_err(|e| Error::io(&path, e))?;
    Ok(path)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn every_surrogate_loads() {
        let dir = tempfile::tempdir().unwrap();
        let scale = SurrogateScale { train_len: 300, test_len: 100 };
        let path = write_surrogates(dir.path(), &BenchmarkId::ALL, scale, 1).unwrap();
        let m = DatasetManifest::load(&path).unwrap();
        for b in BenchmarkId::ALL {
            let d = m.entry(b).unwrap().load(&m, 0.2).unwrap();
            assert_eq!(d.fit.train.len() + d.fit.validation.len(), 300);
            assert_eq!(d.tests.names(), b.test_set_names());
        }
    }
}
