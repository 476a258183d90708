//! Grid execution: fit every (benchmark, model) cell and score it on the
//! held-out test records.

use std::collections::BTreeMap;
use std::sync::Mutex;
use std::time::Instant;

use log::{info, warn};
use rayon::prelude::*;

use super::config::{CellKey, RunConfig};
use super::metrics::compute_rmse;
use super::models::{cell_seed, fit_model, Hyper, ModelRecord, Selection, MODEL_FORMAT_VERSION};
use super::report::{CellStatus, EvalReport, ReportStore, TestScore, REPORT_VERSION, TOOLKIT_VERSION};
use crate::data::{BenchmarkDataset, BenchmarkId, DatasetManifest, TimeSeries};
use crate::error::{Error, Result};

/// Knobs for a single cell.
#[derive(Debug, Clone, Default)]
pub struct CellOptions {
    pub seed: u64,
    pub burn_in: usize,
    pub hyper: Hyper,
    /// Replace one test input sample with NaN before simulating.
    pub inject_blowup: bool,
}

fn failed_report(
    key: CellKey,
    unit: &str,
    scale: f64,
    seed: u64,
    stage: &str,
    err: &Error,
    selected: Selection,
) -> EvalReport {
    EvalReport {
        report_version: REPORT_VERSION,
        benchmark_id: key.benchmark,
        model_id: key.model,
        report_unit: unit.into(),
        report_scale: scale,
        tests: Vec::new(),
        selected,
        train_seconds: 0.0,
        seed,
        status: CellStatus::Failed { stage: stage.into(), message: err.to_string() },
        toolkit_version: TOOLKIT_VERSION.into(),
    }
}

fn poisoned(ts: &TimeSeries) -> TimeSeries {
    let mut out = ts.clone();
    let k = out.u.len() / 2;
    out.u[k] = f64::NAN;
    out
}

/// Fits one cell on the training material, then reads the test records once
/// to score the free-run simulation.
pub fn run_cell(key: CellKey, ds: &BenchmarkDataset, opts: &CellOptions) -> (EvalReport, Option<ModelRecord>) {
    let start = Instant::now();
    let (model, selected) = match fit_model(key.model, key.benchmark, &ds.fit, &opts.hyper, opts.seed) {
        Ok(v) => v,
        Err(e) => {
            warn!("{key}: fit failed: {e}");
            let r = failed_report(key, &ds.report_unit, ds.report_scale, opts.seed, "fit", &e, Selection::new());
            return (r, None);
        }
    };
    let train_seconds = start.elapsed().as_secs_f64();
    let mut tests = Vec::new();
    for (name, ts) in ds.tests.read("simulate") {
        let input = if opts.inject_blowup { poisoned(ts) } else { ts.clone() };
        let score = model
            .simulate(&input)
            .and_then(|yhat| {
                if let Some(i) = yhat.iter().position(|v| !v.is_finite()) {
                    return Err(Error::SimulationBlowUp { index: i });
                }
                compute_rmse(&ts.y, &yhat, opts.burn_in)
            })
            .map(|rmse| TestScore::ok(name, rmse, ds.report_scale))
            .unwrap_or_else(|e| {
                warn!("{key}: {name}: {e}");
                TestScore::failed(name, &e)
            });
        tests.push(score);
    }
    let n_ok = tests.iter().filter(|t| t.rmse.is_some()).count();
    let status = if n_ok == tests.len() {
        CellStatus::Ok
    } else if n_ok > 0 {
        CellStatus::Partial
    } else {
        let message = tests.iter().find_map(|t| t.error.clone()).unwrap_or_default();
        CellStatus::Failed { stage: "simulate".into(), message }
    };
    let report = EvalReport {
        report_version: REPORT_VERSION,
        benchmark_id: key.benchmark,
        model_id: key.model,
        report_unit: ds.report_unit.clone(),
        report_scale: ds.report_scale,
        tests,
        selected,
        train_seconds,
        seed: opts.seed,
        status,
        toolkit_version: TOOLKIT_VERSION.into(),
    };
    let record = ModelRecord {
        format_version: MODEL_FORMAT_VERSION,
        benchmark_id: key.benchmark,
        model_id: key.model,
        seed: opts.seed,
        model,
    };
    (report, Some(record))
}

/// Runs the configured grid and writes one report per cell into
/// `output_dir`. Returns every report of the grid in table order.
pub fn run_benchmark(config: &RunConfig) -> Result<Vec<EvalReport>> {
    config.validate()?;
    let manifest = DatasetManifest::load(&config.manifest)?;
    let store = ReportStore::new(&config.output_dir)?;
    let injected = config.injected()?;

    let mut done = Vec::new();
    let mut todo = Vec::new();
    for key in config.cells() {
        match store.read(&key)? {
            Some(r) if config.resume => done.push(r),
            _ => todo.push(key),
        }
    }

    let mut datasets: BTreeMap<BenchmarkId, Result<BenchmarkDataset>> = BTreeMap::new();
    for key in &todo {
        datasets.entry(key.benchmark).or_insert_with(|| {
            manifest.entry(key.benchmark).and_then(|e| e.load(&manifest, config.val_fraction))
        });
    }

    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(config.workers)
        .build()
        .map_err(|e| Error::invalid(e.to_string()))?;
    let writer = Mutex::new(&store);
    let fresh: Vec<Result<EvalReport>> = pool.install(|| {
        todo.par_iter()
            .map(|&key| {
                let seed = cell_seed(config.seed, key.benchmark, key.model);
                let (report, record) = match &datasets[&key.benchmark] {
                    Ok(ds) => {
                        let opts = CellOptions {
                            seed,
                            burn_in: config.burn_in,
                            hyper: config.hyper_for(key.model),
                            inject_blowup: injected.contains(&key),
                        };
                        run_cell(key, ds, &opts)
                    }
                    Err(e) => {
                        let (unit, scale) = key.benchmark.report_unit();
                        (failed_report(key, unit, scale, seed, "load", e, Selection::new()), None)
                    }
                };
                let store = writer.lock().expect("report writer poisoned");
                if let Some(rec) = record {
                    rec.save(&store.model_path(&key))?;
                }
                store.write(&report)?;
                info!("{key}: {:?}", report.status);
                Ok(report)
            })
            .collect()
    });
    for r in fresh {
        done.push(r?);
    }
    done.sort_by_key(|r| r.key().order());
    Ok(done)
}
