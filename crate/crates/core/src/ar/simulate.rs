use crate::data::{LagStructure, Normalizer, TimeSeries};
use crate::error::{Error, Result};

/// A static one-step map over normalised regressor rows.
pub trait NarxPredictor {
    fn lags(&self) -> LagStructure;
    fn normalizer(&self) -> &Normalizer;
    /// Prediction of the normalised output from a normalised row laid out as
    /// `[y_{t-1} … y_{t-n_y}, u_t … u_{t-n_u+1}]` (no bias entry).
    fn predict_row(&self, row: &[f64]) -> f64;
}

/// Free-run simulation seeded with the first `p = max(n_y, n_u)` measured
/// outputs. Returns physical units; the first `p` samples are `y_init`.
pub fn simulate_narx<M: NarxPredictor + ?Sized>(model: &M, u: &[f64], y_init: &[f64]) -> Result<Vec<f64>> {
    let lags = model.lags();
    let p = lags.max_lag();
    if y_init.len() != p {
        return Err(Error::Dimension(format!("y_init has {} samples, model needs {p}", y_init.len())));
    }
    if u.len() < p {
        return Err(Error::SegmentTooShort(format!("input of length {} shorter than lag {p}", u.len())));
    }
    let norm = model.normalizer();
    let un: Vec<f64> = u.iter().map(|&v| norm.u_to_norm(v)).collect();
    let mut yn = vec![0.0; u.len()];
    for (t, &v) in y_init.iter().enumerate() {
        yn[t] = norm.y_to_norm(v);
    }
    let mut out = Vec::with_capacity(u.len());
    out.extend_from_slice(y_init);
    let mut row = vec![0.0; lags.width()];
    for t in p..u.len() {
        lags.fill_row(&yn, &un, t, &mut row);
        let pred = model.predict_row(&row);
        if !pred.is_finite() {
            return Err(Error::SimulationBlowUp { index: t });
        }
        yn[t] = pred;
        let phys = norm.y_from_norm(pred);
        if !phys.is_finite() {
            return Err(Error::SimulationBlowUp { index: t });
        }
        out.push(phys);
    }
    Ok(out)
}

/// Simulates over a whole record, seeding with its first `p` outputs.
pub fn simulate_record<M: NarxPredictor + ?Sized>(model: &M, ts: &TimeSeries) -> Result<Vec<f64>> {
    let p = model.lags().max_lag();
    if ts.len() < p {
        return Err(Error::SegmentTooShort(format!("record of length {} shorter than lag {p}", ts.len())));
    }
    simulate_narx(model, &ts.u, &ts.y[..p])
}

/// One-step-ahead predictions (physical units) for `t ∈ [start, N)`.
pub fn one_step_predictions<M: NarxPredictor + ?Sized>(model: &M, ts: &TimeSeries, start: usize) -> Result<Vec<f64>> {
    let lags = model.lags();
    if start < lags.max_lag() || start >= ts.len() {
        return Err(Error::SegmentTooShort(format!("cannot predict from {start} in a record of {}", ts.len())));
    }
    let norm = model.normalizer();
    let un: Vec<f64> = ts.u.iter().map(|&v| norm.u_to_norm(v)).collect();
    let yn: Vec<f64> = ts.y.iter().map(|&v| norm.y_to_norm(v)).collect();
    let mut row = vec![0.0; lags.width()];
    Ok((start..ts.len())
        .map(|t| {
            lags.fill_row(&yn, &un, t, &mut row);
            norm.y_from_norm(model.predict_row(&row))
        })
        .collect())
}

pub(crate) fn rmse(a: &[f64], b: &[f64]) -> f64 {
    (a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>() / a.len().max(1) as f64).sqrt()
}

/// Free-run RMSE on a record, `∞` when the simulation blows up.
pub fn free_run_rmse<M: NarxPredictor + ?Sized>(model: &M, ts: &TimeSeries) -> f64 {
    match simulate_record(model, ts) {
        Ok(yhat) => rmse(&yhat, &ts.y),
        Err(_) => f64::INFINITY,
    }
}
