use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::simulate::NarxPredictor;
use crate::data::{build_hankel, build_hankel_from, LagStructure, Normalizer, NormalizerMode, TimeSeries, MAX_LAG};
use crate::error::{Error, Result};
use crate::harness::metrics::{compute_aic, floored_rss};
use crate::kernels::solve_least_squares_qr;
use crate::lti::StateSpaceModel;

/// Linear ARX map `ŷ = [row, 1]·α` in normalised coordinates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArxModel {
    pub lags: LagStructure,
    /// Regressor weights followed by the bias weight.
    pub alpha: Vec<f64>,
    pub normalizer: Normalizer,
}

impl NarxPredictor for ArxModel {
    fn lags(&self) -> LagStructure {
        self.lags
    }

    fn normalizer(&self) -> &Normalizer {
        &self.normalizer
    }

    #[inline]
    fn predict_row(&self, row: &[f64]) -> f64 {
        let w = row.len();
        row.iter().zip(&self.alpha[..w]).map(|(a, b)| a * b).sum::<f64>() + self.alpha[w]
    }
}

/// Difference-equation coefficients in physical units.
#[derive(Debug, Clone, PartialEq)]
pub struct PhysicalArx {
    /// Output coefficients for lags 1..=n_y.
    pub a: Vec<f64>,
    /// Input coefficients for lags 0..n_u.
    pub b: Vec<f64>,
    pub offset: f64,
}

impl ArxModel {
    pub fn physical(&self) -> PhysicalArx {
        let n = &self.normalizer;
        let (ny, nu) = (self.lags.n_y, self.lags.n_u);
        let a: Vec<f64> = self.alpha[..ny].to_vec();
        let b: Vec<f64> = self.alpha[ny..ny + nu].iter().map(|v| v * n.y_scale / n.u_scale).collect();
        let offset =
            n.y_scale * self.alpha[ny + nu] + n.y_mean * (1.0 - a.iter().sum::<f64>()) - n.u_mean * b.iter().sum::<f64>();
        PhysicalArx { a, b, offset }
    }
}

impl PhysicalArx {
    /// Observer-canonical realization. The offset becomes the output mean,
    /// so the realization matches the recursion started from rest at that
    /// level.
    pub fn to_state_space(&self) -> Result<StateSpaceModel> {
        let gain = 1.0 - self.a.iter().sum::<f64>();
        if gain.abs() < 1e-12 {
            return Err(Error::invalid("ARX has a pole at 1; offset has no equilibrium"));
        }
        let b0 = self.b.first().copied().unwrap_or(0.0);
        let n = self.a.len().max(self.b.len().saturating_sub(1)).max(1);
        let coef = |v: &[f64], k: usize| v.get(k).copied().unwrap_or(0.0);
        let mut a = DMatrix::zeros(n, n);
        let mut b = DVector::zeros(n);
        for i in 0..n {
            a[(i, 0)] = coef(&self.a, i);
            if i + 1 < n {
                a[(i, i + 1)] = 1.0;
            }
            b[i] = coef(&self.b, i + 1) + coef(&self.a, i) * b0;
        }
        let mut c = DVector::zeros(n);
        c[0] = 1.0;
        Ok(StateSpaceModel::new(a, b, c, b0)?.with_means(0.0, self.offset / gain))
    }
}

pub(crate) fn fit_arx_normalized(train_n: &TimeSeries, lags: LagStructure, normalizer: Normalizer) -> Result<ArxModel> {
    let (h, y) = build_hankel(&train_n.u, &train_n.y, lags)?;
    let alpha = solve_least_squares_qr(&h, &y)?;
    Ok(ArxModel { lags, alpha: alpha.iter().copied().collect(), normalizer })
}

/// Least-squares ARX on z-scored training data.
pub fn fit_arx(train: &TimeSeries, lags: LagStructure) -> Result<ArxModel> {
    let normalizer = Normalizer::fit(train, NormalizerMode::Zscore)?;
    fit_arx_normalized(&normalizer.apply(train), lags, normalizer)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LagScore {
    pub lags: LagStructure,
    pub aic: f64,
}

fn select_key(s: &LagScore) -> (f64, usize, usize) {
    (s.aic, s.lags.n_y + s.lags.n_u, s.lags.n_y)
}

fn better(a: &LagScore, b: &LagScore) -> bool {
    let (ka, kb) = (select_key(a), select_key(b));
    ka.0.total_cmp(&kb.0).then(ka.1.cmp(&kb.1)).then(ka.2.cmp(&kb.2)).is_lt()
}

/// Validation-set AIC of an ARX fit, using one-step residuals on rows `t ≥ start`.
fn arx_validation_aic(train_n: &TimeSeries, val_n: &TimeSeries, lags: LagStructure, start: usize) -> Result<f64> {
    let model = fit_arx_normalized(train_n, lags, Normalizer::identity())?;
    let (h, y) = build_hankel_from(&val_n.u, &val_n.y, lags, start)?;
    let alpha = DVector::from_column_slice(&model.alpha);
    let resid = h * alpha - &y;
    let rss = floored_rss(resid.norm_squared(), y.norm_squared());
    let (aic, _) = compute_aic(rss, resid.len(), lags.width() + 1)?;
    Ok(aic)
}

/// Exhaustive AIC search over `n_y ∈ 0..=max_lag`, `n_u ∈ 1..=max_lag`.
///
/// Every candidate is scored on the same validation rows (`t ≥ max_lag`).
/// Ties go to the smaller total lag, then the smaller `n_y`. With
/// `ced_override` the fixed structure (10, 10) is returned.
pub fn select_lags_aic(
    train: &TimeSeries,
    validation: &TimeSeries,
    max_lag: usize,
    ced_override: bool,
) -> Result<LagStructure> {
    if ced_override {
        return LagStructure::new(10, 10);
    }
    Ok(lag_scores(train, validation, max_lag)?.0.lags)
}

/// Best candidate plus the full score table.
pub fn lag_scores(train: &TimeSeries, validation: &TimeSeries, max_lag: usize) -> Result<(LagScore, Vec<LagScore>)> {
    if max_lag == 0 || max_lag > MAX_LAG {
        return Err(Error::invalid(format!("max_lag must be in 1..={MAX_LAG}")));
    }
    if validation.len() <= max_lag {
        return Err(Error::SegmentTooShort(format!(
            "validation record of {} samples cannot score lag {max_lag}",
            validation.len()
        )));
    }
    let norm = Normalizer::fit(train, NormalizerMode::Zscore)?;
    let train_n = norm.apply(train);
    let val_n = norm.apply(validation);

    let candidates: Vec<LagStructure> = (0..=max_lag)
        .flat_map(|n_y| (1..=max_lag).map(move |n_u| LagStructure { n_y, n_u }))
        .filter(|l| l.max_lag() < train.len())
        .collect();
    let scores: Vec<LagScore> = candidates
        .par_iter()
        .filter_map(|&lags| match arx_validation_aic(&train_n, &val_n, lags, max_lag) {
            Ok(aic) if aic.is_finite() => Some(LagScore { lags, aic }),
            _ => None,
        })
        .collect();
    let best = scores
        .iter()
        .copied()
        .reduce(|a, b| if better(&b, &a) { b } else { a })
        .ok_or_else(|| Error::Training("every ARX lag candidate failed".into()))?;
    Ok((best, scores))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ar::simulate::{one_step_predictions, simulate_record};
    use crate::data::{
        build_hankel, generate_synthetic, synthetic::white_noise, NoisePlacement, SyntheticKind, SyntheticSystemSpec,
    };

    fn arx_series(a: Vec<f64>, b: Vec<f64>, n: usize, noise: f64, seed: u64) -> TimeSeries {
        let u = white_noise(n, 1.0, seed);
        let mut spec = SyntheticSystemSpec::new(SyntheticKind::KnownArx { a, b }, noise, seed + 1000);
        spec.noise_placement = NoisePlacement::Equation;
        generate_synthetic(&spec, &u, 1.0).unwrap()
    }

    #[test]
    fn recovers_generating_coefficients() {
        let ts = arx_series(vec![0.5], vec![0.0, 1.0], 400, 0.0, 1);
        let m = fit_arx(&ts, LagStructure::new(1, 2).unwrap()).unwrap();
        let p = m.physical();
        assert!((p.a[0] - 0.5).abs() < 1e-8);
        assert!(p.b[0].abs() < 1e-8 && (p.b[1] - 1.0).abs() < 1e-8);
        assert!(p.offset.abs() < 1e-8);
        let sim = simulate_record(&m, &ts).unwrap();
        for (a, b) in sim.iter().zip(&ts.y) {
            assert!((a - b).abs() < 1e-10);
        }
    }

    #[test]
    fn state_space_realization_matches_recursion() {
        let ts = arx_series(vec![0.7, -0.2], vec![0.3, 1.0, 0.5], 300, 0.0, 4);
        let m = fit_arx(&ts, LagStructure::new(2, 3).unwrap()).unwrap();
        let ss = m.physical().to_state_space().unwrap();
        assert_eq!(ss.order(), 2);
        let a = simulate_record(&m, &ts).unwrap();
        let b = crate::lti::simulate_ss(&ss, &ts.u, None).unwrap();
        for (x, y) in a.iter().zip(&b) {
            assert!((x - y).abs() < 1e-8, "{x} vs {y}");
        }
        let unit_pole = PhysicalArx { a: vec![1.0], b: vec![1.0], offset: 0.0 };
        assert!(unit_pole.to_state_space().is_err());
    }

    #[test]
    fn zero_data_gives_zero_weights() {
        let ts = TimeSeries::new("z", vec![0.0; 30], vec![0.0; 30], 1.0).unwrap();
        let m = fit_arx(&ts, LagStructure::new(2, 2).unwrap()).unwrap();
        assert!(m.alpha.iter().all(|v| *v == 0.0));
    }

    #[test]
    fn residuals_orthogonal_to_regressors() {
        let ts = arx_series(vec![0.7, -0.2], vec![0.3, 1.0], 500, 0.1, 2);
        let lags = LagStructure::new(3, 3).unwrap();
        let m = fit_arx(&ts, lags).unwrap();
        let tn = m.normalizer.apply(&ts);
        let (h, y) = build_hankel(&tn.u, &tn.y, lags).unwrap();
        let r = &h * DVector::from_column_slice(&m.alpha) - &y;
        assert!((h.transpose() * r).norm() <= 1e-8 * (h.transpose() * y).norm());
    }

    #[test]
    fn output_free_model_is_feed_forward() {
        let u = white_noise(200, 1.0, 3);
        let y: Vec<f64> = u.iter().map(|v| 2.0 * v + 1.0).collect();
        let ts = TimeSeries::new("ff", u, y, 1.0).unwrap();
        let m = fit_arx(&ts, LagStructure::new(0, 1).unwrap()).unwrap();
        let sim = simulate_record(&m, &ts).unwrap();
        let one = one_step_predictions(&m, &ts, 1).unwrap();
        assert_eq!(&sim[1..], &one[..]);
    }

    #[test]
    fn aic_prefers_true_structure() {
        let ts = arx_series(vec![0.5], vec![1.0], 1200, 0.05, 4);
        let (tr, va) = crate::data::split_train_val(&ts, 0.3, 6).unwrap();
        assert_eq!(select_lags_aic(&tr, &va, 6, false).unwrap(), LagStructure { n_y: 1, n_u: 1 });
    }

    #[test]
    fn static_map_selects_no_output_lags() {
        let u = white_noise(600, 1.0, 5);
        let ts = TimeSeries::new("s", u.clone(), u, 1.0).unwrap();
        let (tr, va) = crate::data::split_train_val(&ts, 0.3, 5).unwrap();
        assert_eq!(select_lags_aic(&tr, &va, 5, false).unwrap().n_y, 0);
    }

    #[test]
    fn ced_override() {
        let ts = arx_series(vec![0.5], vec![1.0], 100, 0.0, 6);
        assert_eq!(select_lags_aic(&ts, &ts, 3, true).unwrap(), LagStructure { n_y: 10, n_u: 10 });
    }
}
