use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const MAX_LAG: usize = 20;

/// Numbers of lagged outputs and inputs in an autoregressive regressor.
///
/// Rows hold `[y_{t-1} … y_{t-n_y}, u_t … u_{t-n_u+1}]`; the input block
/// includes the current sample.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct LagStructure {
    pub n_y: usize,
    pub n_u: usize,
}

impl LagStructure {
    pub fn new(n_y: usize, n_u: usize) -> Result<Self> {
        if n_u < 1 {
            return Err(Error::invalid("at least one input lag is required"));
        }
        if n_y > MAX_LAG || n_u > MAX_LAG {
            return Err(Error::invalid(format!("lags ({n_y}, {n_u}) exceed the bound {MAX_LAG}")));
        }
        Ok(LagStructure { n_y, n_u })
    }

    /// `p = max(n_y, n_u)`, the number of leading samples without a full row.
    pub fn max_lag(&self) -> usize {
        self.n_y.max(self.n_u)
    }

    /// Regressor width without the bias column.
    pub fn width(&self) -> usize {
        self.n_y + self.n_u
    }

    /// Fills `row` with the regressor for time `t` (no bias column).
    #[inline]
    pub fn fill_row(&self, y: &[f64], u: &[f64], t: usize, row: &mut [f64]) {
        for i in 0..self.n_y {
            row[i] = y[t - 1 - i];
        }
        for j in 0..self.n_u {
            row[self.n_y + j] = u[t - j];
        }
    }
}

/// Regressor matrix (bias column last) and one-step targets for `t ∈ [p, N)`.
pub fn build_hankel(u: &[f64], y: &[f64], lags: LagStructure) -> Result<(DMatrix<f64>, DVector<f64>)> {
    build_hankel_from(u, y, lags, lags.max_lag())
}

/// Same as [`build_hankel`] but starting at `start ≥ p`, so regressors for
/// different lag structures can share one set of target rows.
pub fn build_hankel_from(
    u: &[f64],
    y: &[f64],
    lags: LagStructure,
    start: usize,
) -> Result<(DMatrix<f64>, DVector<f64>)> {
    if u.len() != y.len() {
        return Err(Error::Dimension(format!("input {} vs output {}", u.len(), y.len())));
    }
    let n = y.len();
    let p = lags.max_lag();
    if start < p || n <= start {
        return Err(Error::SegmentTooShort(format!(
            "series of length {n} cannot hold a lag-{p} regressor starting at {start}"
        )));
    }
    let rows = n - start;
    let w = lags.width();
    let mut h = DMatrix::<f64>::zeros(rows, w + 1);
    let mut targets = DVector::<f64>::zeros(rows);
    let mut row = vec![0.0; w];
    for (r, t) in (start..n).enumerate() {
        lags.fill_row(y, u, t, &mut row);
        for (c, v) in row.iter().enumerate() {
            h[(r, c)] = *v;
        }
        h[(r, w)] = 1.0;
        targets[r] = y[t];
    }
    Ok((h, targets))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn hand_built_rows() {
        let y = [1.0, 2.0, 3.0, 4.0];
        let u = [10.0, 20.0, 30.0, 40.0];
        let (h, t) = build_hankel(&u, &y, LagStructure::new(2, 1).unwrap()).unwrap();
        assert_eq!(h.shape(), (2, 4));
        assert_eq!(h.row(0).iter().cloned().collect::<Vec<_>>(), vec![2.0, 1.0, 30.0, 1.0]);
        assert_eq!(h.row(1).iter().cloned().collect::<Vec<_>>(), vec![3.0, 2.0, 40.0, 1.0]);
        assert_eq!(t.as_slice(), &[3.0, 4.0]);
    }

    #[test]
    fn output_free_regressor() {
        let (h, t) = build_hankel(&[1.0, 2.0, 3.0], &[4.0, 5.0, 6.0], LagStructure::new(0, 1).unwrap()).unwrap();
        assert_eq!(h.shape(), (2, 2));
        assert_eq!(h.column(0).as_slice(), &[2.0, 3.0]);
        assert_eq!(t.as_slice(), &[5.0, 6.0]);
    }

    #[test]
    fn too_short() {
        assert!(build_hankel(&[1.0, 2.0], &[1.0, 2.0], LagStructure::new(2, 1).unwrap()).is_err());
        assert!(LagStructure::new(0, 0).is_err());
        assert!(LagStructure::new(21, 1).is_err());
    }

    proptest! {
        #[test]
        fn index_audit(
            n in 22usize..80,
            n_y in 0usize..=20,
            n_u in 1usize..=20,
            seed in any::<u64>(),
        ) {
            let y: Vec<f64> = (0..n).map(|i| ((i as u64 * 7919 + seed) % 1000) as f64).collect();
            let u: Vec<f64> = (0..n).map(|i| -(((i as u64 * 104729 + seed) % 997) as f64)).collect();
            let lags = LagStructure::new(n_y, n_u).unwrap();
            let (h, tg) = build_hankel(&u, &y, lags).unwrap();
            let p = n_y.max(n_u);
            prop_assert_eq!(h.nrows(), n - p);
            prop_assert_eq!(h.ncols(), n_y + n_u + 1);
            for r in 0..h.nrows() {
                let t = r + p;
                prop_assert_eq!(tg[r], y[t]);
                for i in 0..n_y { prop_assert_eq!(h[(r, i)], y[t - 1 - i]); }
                for j in 0..n_u { prop_assert_eq!(h[(r, n_y + j)], u[t - j]); }
                prop_assert_eq!(h[(r, n_y + n_u)], 1.0);
            }
        }
    }
}
