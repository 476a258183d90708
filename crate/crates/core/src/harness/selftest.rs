//! Quick invariant checks runnable from an installed binary.

use nalgebra::{DMatrix, DVector};

use super::config::RunConfig;
use super::metrics::{compute_aic, compute_rmse};
use super::models::ModelId;
use super::run::run_benchmark;
use super::surrogate::{write_surrogates, SurrogateScale};
use crate::ar::{fit_arx, gp_nlml, simulate_record, GpHyperparams};
use crate::data::synthetic::white_noise;
use crate::data::{generate_synthetic, BenchmarkId, LagStructure, NoisePlacement, SyntheticKind, SyntheticSystemSpec};
use crate::error::{Error, Result};
use crate::lti::simulate_ss;

#[derive(Debug, Clone)]
pub struct Check {
    pub name: &'static str,
    pub outcome: std::result::Result<(), String>,
}

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<()> {
    if cond {
        Ok(())
    } else {
        Err(Error::invalid(msg()))
    }
}

fn metrics() -> Result<()> {
    let r = compute_rmse(&[9.0, 0.0, 0.0], &[0.0, 3.0, 4.0], 1)?;
    ensure((r - 12.5f64.sqrt()).abs() < 1e-12, || format!("rmse {r}"))?;
    let (aic, _) = compute_aic(100.0, 100, 3)?;
    ensure((aic - 6.0).abs() < 1e-12, || format!("aic {aic}"))
}

fn arx_recovery() -> Result<()> {
    let u = white_noise(400, 1.0, 11);
    let mut spec = SyntheticSystemSpec::new(SyntheticKind::KnownArx { a: vec![0.5], b: vec![0.0, 1.0] }, 0.0, 12);
    spec.noise_placement = NoisePlacement::Equation;
    let ts = generate_synthetic(&spec, &u, 1.0)?;
    let m = fit_arx(&ts, LagStructure::new(1, 2)?)?;
    let p = m.physical();
    ensure((p.a[0] - 0.5).abs() < 1e-8 && (p.b[1] - 1.0).abs() < 1e-8, || format!("coefficients {p:?}"))?;
    let sim = simulate_record(&m, &ts)?;
    let ss = simulate_ss(&p.to_state_space()?, &ts.u, None)?;
    let worst = sim.iter().zip(&ss).zip(&ts.y).map(|((a, b), y)| (a - y).abs().max((b - y).abs())).fold(0.0, f64::max);
    ensure(worst < 1e-8, || format!("simulation error {worst:e}"))
}

fn gp_one_point() -> Result<()> {
    let v = gp_nlml(
        &GpHyperparams::new(1.0, 1.0, 1.0)?,
        &DMatrix::from_row_slice(1, 1, &[0.3]),
        &DVector::from_vec(vec![1.0]),
    )?;
    ensure((v - 1.5155).abs() < 1e-4, || format!("nlml {v}"))
}

fn grid_determinism() -> Result<()> {
    let dir = std::env::temp_dir().join(format!("nlsi-selftest-{}", std::process::id()));
    let data = dir.join("data");
    let scale = SurrogateScale { train_len: 400, test_len: 200 };
    let manifest = write_surrogates(&data, &[BenchmarkId::Ced], scale, 5)?;
    let run = |workers: usize| {
        let cfg = RunConfig {
            config_version: super::config::CONFIG_VERSION,
            manifest: manifest.clone(),
            benchmarks: vec![BenchmarkId::Ced],
            models: vec![ModelId::LtiArx, ModelId::Pnarx],
            seed: 1,
            val_fraction: 0.2,
            burn_in: 0,
            output_dir: dir.join(format!("out{workers}")),
            workers,
            resume: false,
            hyper: Default::default(),
            inject_blowup: Vec::new(),
        };
        run_benchmark(&cfg).map(|rs| rs.iter().map(|r| r.without_timing()).collect::<Vec<_>>())
    };
    let outcome = run(1).and_then(|a| Ok((a, run(2)?)));
    let _ = std::fs::remove_dir_all(&dir);
    let (a, b) = outcome?;
    ensure(a.len() == 2 && a == b, || "reports differ between worker counts".into())
}

/// Runs every check; never panics.
pub fn run_selftest() -> Vec<Check> {
    let checks: [(&'static str, fn() -> Result<()>); 4] = [
        ("metric hand cases", metrics),
        ("arx recovery and realization", arx_recovery),
        ("gp one-point nlml", gp_one_point),
        ("grid determinism", grid_determinism),
    ];
    checks.iter().map(|(name, f)| Check { name, outcome: f().map_err(|e| e.to_string()) }).collect()
}
