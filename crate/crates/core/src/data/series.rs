use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// One single-input single-output record in physical units.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimeSeries {
    pub name: String,
    pub u: Vec<f64>,
    pub y: Vec<f64>,
    pub sample_time: f64,
}

impl TimeSeries {
    pub fn new(name: impl Into<String>, u: Vec<f64>, y: Vec<f64>, sample_time: f64) -> Result<Self> {
        if u.is_empty() && y.is_empty() {
            return Err(Error::EmptySeries);
        }
        if u.len() != y.len() {
            return Err(Error::Dimension(format!("input length {} != output length {}", u.len(), y.len())));
        }
        if !(sample_time > 0.0) || !sample_time.is_finite() {
            return Err(Error::invalid(format!("sample time must be positive, got {sample_time}")));
        }
        if let Some(i) = u.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite { index: i, context: "input sample".into() });
        }
        if let Some(i) = y.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite { index: i, context: "output sample".into() });
        }
        Ok(TimeSeries { name: name.into(), u, y, sample_time })
    }

    pub fn len(&self) -> usize {
        self.u.len()
    }

    pub fn is_empty(&self) -> bool {
        self.u.is_empty()
    }

    /// Contiguous sub-record `[start, end)`.
    pub fn slice(&self, start: usize, end: usize, name: impl Into<String>) -> Result<Self> {
        if start >= end || end > self.len() {
            return Err(Error::invalid(format!("bad slice {start}..{end} of length {}", self.len())));
        }
        TimeSeries::new(name, self.u[start..end].to_vec(), self.y[start..end].to_vec(), self.sample_time)
    }

    /// First `n` samples (or the whole record if shorter).
    pub fn head(&self, n: usize) -> Self {
        let n = n.min(self.len()).max(1);
        TimeSeries {
            name: self.name.clone(),
            u: self.u[..n].to_vec(),
            y: self.y[..n].to_vec(),
            sample_time: self.sample_time,
        }
    }
}

/// Splits off the contiguous tail as a validation record.
///
/// Both segments must hold at least `2·max_lag + 1` samples.
pub fn split_train_val(ts: &TimeSeries, val_fraction: f64, max_lag: usize) -> Result<(TimeSeries, TimeSeries)> {
    if !(val_fraction > 0.0 && val_fraction < 1.0) {
        return Err(Error::invalid(format!("validation fraction must lie in (0,1), got {val_fraction}")));
    }
    let n = ts.len();
    let n_val = (n as f64 * val_fraction).round() as usize;
    let n_train = n.saturating_sub(n_val);
    let min_len = 2 * max_lag + 1;
    if n_val < min_len || n_train < min_len {
        return Err(Error::SegmentTooShort(format!(
            "train {n_train} / validation {n_val} samples, need at least {min_len} each"
        )));
    }
    let train = ts.slice(0, n_train, format!("{}/train", ts.name))?;
    let val = ts.slice(n_train, n, format!("{}/validation", ts.name))?;
    Ok((train, val))
}
