//! Polynomial NARX over a per-regressor Legendre basis (no cross terms).

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::simulate::NarxPredictor;
use crate::data::{build_hankel, FitData, LagStructure, Normalizer, NormalizerMode};
use crate::error::{Error, Result};
use crate::harness::metrics::{compute_aic, floored_rss};
use crate::kernels::solve_least_squares_qr;

pub const MAX_DEGREE: usize = 7;

/// Training range of one regressor column; equal ends mark a constant column.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ColumnRange {
    pub min: f64,
    pub max: f64,
}

impl ColumnRange {
    pub fn is_active(&self) -> bool {
        self.max > self.min
    }

    #[inline]
    pub fn scale(&self, x: f64) -> f64 {
        2.0 * (x - self.min) / (self.max - self.min) - 1.0
    }
}

/// Writes `P_1(x) … P_degree(x)` into `out` via the three-term recurrence.
#[inline]
pub fn legendre_values(x: f64, degree: usize, out: &mut [f64]) {
    let mut p_prev = 1.0;
    let mut p = x;
    for k in 1..=degree {
        out[k - 1] = p;
        let next = ((2 * k + 1) as f64 * x * p - k as f64 * p_prev) / (k + 1) as f64;
        p_prev = p;
        p = next;
    }
}

fn check_ranges(ranges: &[ColumnRange]) -> Result<()> {
    for (i, r) in ranges.iter().enumerate() {
        if !r.min.is_finite() || !r.max.is_finite() || r.min > r.max {
            return Err(Error::invalid(format!("degenerate range on column {i}: ({}, {})", r.min, r.max)));
        }
    }
    Ok(())
}

/// Column ranges of a regressor matrix (bias column excluded).
pub fn column_ranges(h: &DMatrix<f64>, width: usize) -> Vec<ColumnRange> {
    (0..width)
        .map(|j| {
            let c = h.column(j);
            ColumnRange { min: c.min(), max: c.max() }
        })
        .collect()
}

fn feature_count(ranges: &[ColumnRange], degree: usize) -> usize {
    degree * ranges.iter().filter(|r| r.is_active()).count() + 1
}

#[inline]
fn fill_features(row: &[f64], degree: usize, ranges: &[ColumnRange], out: &mut [f64]) {
    let mut k = 0;
    for (x, r) in row.iter().zip(ranges) {
        if !r.is_active() {
            continue;
        }
        legendre_values(r.scale(*x), degree, &mut out[k..k + degree]);
        k += degree;
    }
    out[k] = 1.0;
}

/// Legendre expansion of each active column of `h` plus one constant column.
/// Only the first `ranges.len()` columns of `h` are expanded.
pub fn legendre_features(h: &DMatrix<f64>, degree: usize, ranges: &[ColumnRange]) -> Result<DMatrix<f64>> {
    if !(1..=MAX_DEGREE).contains(&degree) {
        return Err(Error::invalid(format!("degree must be in 1..={MAX_DEGREE}, got {degree}")));
    }
    if h.ncols() < ranges.len() {
        return Err(Error::Dimension(format!("{} columns but {} ranges", h.ncols(), ranges.len())));
    }
    check_ranges(ranges)?;
    let width = feature_count(ranges, degree);
    let mut out = DMatrix::<f64>::zeros(h.nrows(), width);
    let mut row = vec![0.0; ranges.len()];
    let mut feats = vec![0.0; width];
    for i in 0..h.nrows() {
        for (j, v) in row.iter_mut().enumerate() {
            *v = h[(i, j)];
        }
        fill_features(&row, degree, ranges, &mut feats);
        for (j, f) in feats.iter().enumerate() {
            out[(i, j)] = *f;
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolyNarxModel {
    pub lags: LagStructure,
    pub degree: usize,
    pub column_ranges: Vec<ColumnRange>,
    pub alpha: Vec<f64>,
    pub normalizer: Normalizer,
}

impl NarxPredictor for PolyNarxModel {
    fn lags(&self) -> LagStructure {
        self.lags
    }

    fn normalizer(&self) -> &Normalizer {
        &self.normalizer
    }

    fn predict_row(&self, row: &[f64]) -> f64 {
        let mut s = 0.0;
        let mut k = 0;
        let mut buf = [0.0; MAX_DEGREE];
        for (x, r) in row.iter().zip(&self.column_ranges) {
            if !r.is_active() {
                continue;
            }
            legendre_values(r.scale(*x), self.degree, &mut buf);
            for p in &buf[..self.degree] {
                s += p * self.alpha[k];
                k += 1;
            }
        }
        s + self.alpha[k]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DegreeScore {
    pub degree: usize,
    pub aic: f64,
    pub train_rmse: f64,
}

/// Fits degrees `1..=max_degree` and keeps the lowest validation AIC
/// (one-step residuals, `k` = feature count). Also returns the score table.
pub fn fit_pnarx(data: &FitData, lags: LagStructure, max_degree: usize) -> Result<(PolyNarxModel, Vec<DegreeScore>)> {
    if !(1..=MAX_DEGREE).contains(&max_degree) {
        return Err(Error::invalid(format!("max degree must be in 1..={MAX_DEGREE}")));
    }
    let normalizer = Normalizer::fit(&data.train, NormalizerMode::Zscore)?;
    let tr = normalizer.apply(&data.train);
    let va = normalizer.apply(&data.validation);
    let (h_tr, y_tr) = build_hankel(&tr.u, &tr.y, lags)?;
    let (h_va, y_va) = build_hankel(&va.u, &va.y, lags)?;
    let ranges = column_ranges(&h_tr, lags.width());
    let val_energy = y_va.norm_squared();

    let mut best: Option<(f64, PolyNarxModel)> = None;
    let mut table = Vec::with_capacity(max_degree);
    for degree in 1..=max_degree {
        let f_tr = legendre_features(&h_tr, degree, &ranges)?;
        let alpha = solve_least_squares_qr(&f_tr, &y_tr)?;
        let train_rmse = ((&f_tr * &alpha - &y_tr).norm_squared() / y_tr.len() as f64).sqrt() * normalizer.y_scale;
        let f_va = legendre_features(&h_va, degree, &ranges)?;
        let resid: DVector<f64> = f_va * &alpha - &y_va;
        let rss = floored_rss(resid.norm_squared(), val_energy);
        let (aic, _) = compute_aic(rss, resid.len(), alpha.len())?;
        table.push(DegreeScore { degree, aic, train_rmse });
        let model = PolyNarxModel {
            lags,
            degree,
            column_ranges: ranges.clone(),
            alpha: alpha.iter().copied().collect(),
            normalizer: normalizer.clone(),
        };
        if aic.is_finite() && best.as_ref().map_or(true, |(b, _)| aic < *b) {
            best = Some((aic, model));
        }
    }
    let (_, model) = best.ok_or_else(|| Error::Training("no polynomial degree produced a finite AIC".into()))?;
    Ok((model, table))
}

/// Fit at one fixed degree (no selection).
pub fn fit_pnarx_degree(data: &FitData, lags: LagStructure, degree: usize) -> Result<PolyNarxModel> {
    let normalizer = Normalizer::fit(&data.train, NormalizerMode::Zscore)?;
    let tr = normalizer.apply(&data.train);
    let (h_tr, y_tr) = build_hankel(&tr.u, &tr.y, lags)?;
    let ranges = column_ranges(&h_tr, lags.width());
    let f_tr = legendre_features(&h_tr, degree, &ranges)?;
    let alpha = solve_least_squares_qr(&f_tr, &y_tr)?;
    Ok(PolyNarxModel { lags, degree, column_ranges: ranges, alpha: alpha.iter().copied().collect(), normalizer })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn hand_values() {
        let h = DMatrix::from_row_slice(1, 1, &[0.0]);
        let f = legendre_features(&h, 2, &[ColumnRange { min: -1.0, max: 1.0 }]).unwrap();
        assert_eq!(f.row(0).iter().copied().collect::<Vec<_>>(), vec![0.0, -0.5, 1.0]);
    }

    #[test]
    fn endpoint_identity() {
        let h = DMatrix::from_row_slice(1, 1, &[3.0]);
        let f = legendre_features(&h, 7, &[ColumnRange { min: -2.0, max: 3.0 }]).unwrap();
        for k in 0..7 {
            assert!((f[(0, k)] - 1.0).abs() < 1e-15);
        }
    }

    #[test]
    fn constant_column_is_skipped() {
        let h = DMatrix::from_row_slice(2, 2, &[1.0, 5.0, 2.0, 5.0]);
        let ranges = column_ranges(&h, 2);
        assert!(!ranges[1].is_active());
        let f = legendre_features(&h, 3, &ranges).unwrap();
        assert_eq!(f.ncols(), 4);
    }

    #[test]
    fn out_of_range_is_not_clipped() {
        let h = DMatrix::from_row_slice(1, 1, &[2.0]);
        let f = legendre_features(&h, 2, &[ColumnRange { min: -1.0, max: 1.0 }]).unwrap();
        assert_eq!(f[(0, 0)], 2.0);
        assert_eq!(f[(0, 1)], 5.5);
    }

    #[test]
    fn bad_arguments() {
        let h = DMatrix::from_row_slice(1, 1, &[0.0]);
        let r = [ColumnRange { min: -1.0, max: 1.0 }];
        assert!(legendre_features(&h, 0, &r).is_err());
        assert!(legendre_features(&h, 8, &r).is_err());
        assert!(legendre_features(&h, 2, &[ColumnRange { min: 1.0, max: -1.0 }]).is_err());
    }

    #[test]
    fn predict_row_matches_feature_matrix() {
        let h = DMatrix::from_row_slice(3, 2, &[0.1, -0.3, 0.7, 0.2, -0.5, 0.9]);
        let ranges = column_ranges(&h, 2);
        let f = legendre_features(&h, 4, &ranges).unwrap();
        let alpha: Vec<f64> = (0..f.ncols()).map(|i| 0.1 * i as f64 - 0.3).collect();
        let m = PolyNarxModel {
            lags: LagStructure { n_y: 1, n_u: 1 },
            degree: 4,
            column_ranges: ranges,
            alpha: alpha.clone(),
            normalizer: Normalizer::identity(),
        };
        for i in 0..3 {
            let direct: f64 = (0..f.ncols()).map(|j| f[(i, j)] * alpha[j]).sum();
            assert!((m.predict_row(&[h[(i, 0)], h[(i, 1)]]) - direct).abs() < 1e-14);
        }
    }
}
