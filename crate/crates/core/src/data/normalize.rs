use serde::{Deserialize, Serialize};

use super::TimeSeries;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NormalizerMode {
    MeanOnly,
    Zscore,
}

/// Affine input/output scaling fitted on training data only.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Normalizer {
    pub mode: NormalizerMode,
    pub u_mean: f64,
    pub y_mean: f64,
    pub u_scale: f64,
    pub y_scale: f64,
    /// Set when a zscore channel had zero spread and its scale fell back to 1.
    #[serde(default)]
    pub constant_signal: bool,
}

fn mean(x: &[f64]) -> f64 {
    x.iter().sum::<f64>() / x.len() as f64
}

/// Population (1/N) standard deviation.
fn pop_std(x: &[f64], m: f64) -> f64 {
    (x.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / x.len() as f64).sqrt()
}

impl Normalizer {
    pub fn identity() -> Self {
        Normalizer {
            mode: NormalizerMode::MeanOnly,
            u_mean: 0.0,
            y_mean: 0.0,
            u_scale: 1.0,
            y_scale: 1.0,
            constant_signal: false,
        }
    }

    pub fn fit(train: &TimeSeries, mode: NormalizerMode) -> Result<Self> {
        if train.is_empty() {
            return Err(Error::EmptySeries);
        }
        let u_mean = mean(&train.u);
        let y_mean = mean(&train.y);
        let mut constant_signal = false;
        let (u_scale, y_scale) = match mode {
            NormalizerMode::MeanOnly => (1.0, 1.0),
            NormalizerMode::Zscore => {
                let mut pick = |s: f64| {
                    if s > 0.0 && s.is_finite() {
                        s
                    } else {
                        constant_signal = true;
                        1.0
                    }
                };
                let us = pick(pop_std(&train.u, u_mean));
                let ys = pick(pop_std(&train.y, y_mean));
                (us, ys)
            }
        };
        if constant_signal {
            log::warn!("constant signal in '{}'; scale set to 1", train.name);
        }
        Ok(Normalizer { mode, u_mean, y_mean, u_scale, y_scale, constant_signal })
    }

    #[inline]
    pub fn u_to_norm(&self, u: f64) -> f64 {
        (u - self.u_mean) / self.u_scale
    }

    #[inline]
    pub fn y_to_norm(&self, y: f64) -> f64 {
        (y - self.y_mean) / self.y_scale
    }

    #[inline]
    pub fn y_from_norm(&self, y: f64) -> f64 {
        y * self.y_scale + self.y_mean
    }

    #[inline]
    pub fn u_from_norm(&self, u: f64) -> f64 {
        u * self.u_scale + self.u_mean
    }

    pub fn apply(&self, ts: &TimeSeries) -> TimeSeries {
        TimeSeries {
            name: ts.name.clone(),
            u: ts.u.iter().map(|&v| self.u_to_norm(v)).collect(),
            y: ts.y.iter().map(|&v| self.y_to_norm(v)).collect(),
            sample_time: ts.sample_time,
        }
    }

    pub fn invert(&self, ts: &TimeSeries) -> TimeSeries {
        TimeSeries {
            name: ts.name.clone(),
            u: ts.u.iter().map(|&v| self.u_from_norm(v)).collect(),
            y: ts.y.iter().map(|&v| self.y_from_norm(v)).collect(),
            sample_time: ts.sample_time,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn ts(u: Vec<f64>, y: Vec<f64>) -> TimeSeries {
        TimeSeries::new("t", u, y, 1.0).unwrap()
    }

    #[test]
    fn mean_only() {
        let n = Normalizer::fit(&ts(vec![1.0, 3.0], vec![0.0, 0.0]), NormalizerMode::MeanOnly).unwrap();
        assert_eq!((n.u_mean, n.u_scale), (2.0, 1.0));
    }

    #[test]
    fn zscore_population_std() {
        let n = Normalizer::fit(&ts(vec![1.0, 2.0], vec![0.0, 2.0]), NormalizerMode::Zscore).unwrap();
        assert_eq!(n.y_mean, 1.0);
        assert!((n.y_scale - 1.0).abs() < 1e-15);
        assert!(!n.constant_signal);
    }

    #[test]
    fn constant_signal_flagged() {
        let n = Normalizer::fit(&ts(vec![1.0, 2.0, 3.0], vec![5.0; 3]), NormalizerMode::Zscore).unwrap();
        assert_eq!(n.y_scale, 1.0);
        assert!(n.constant_signal);
    }

    proptest! {
        #[test]
        fn round_trip(
            data in prop::collection::vec((-1e3f64..1e3, -1e3f64..1e3), 2..60),
            zscore in any::<bool>(),
        ) {
            let (u, y): (Vec<f64>, Vec<f64>) = data.into_iter().unzip();
            let s = ts(u, y);
            let mode = if zscore { NormalizerMode::Zscore } else { NormalizerMode::MeanOnly };
            let n = Normalizer::fit(&s, mode).unwrap();
            prop_assert!(n.u_scale > 0.0 && n.y_scale > 0.0);
            let back = n.invert(&n.apply(&s));
            for (a, b) in back.u.iter().zip(&s.u).chain(back.y.iter().zip(&s.y)) {
                prop_assert!((a - b).abs() <= 1e-12 * b.abs().max(1.0));
            }
        }
    }
}
