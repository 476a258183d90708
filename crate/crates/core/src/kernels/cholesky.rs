use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// Lower-triangular Cholesky factor of a symmetric positive-definite matrix.
#[derive(Debug, Clone)]
pub struct Cholesky {
    l: DMatrix<f64>,
}

impl Cholesky {
    /// Factors `s` using only its lower triangle. No jitter is added here.
    pub fn factor(s: &DMatrix<f64>) -> Result<Self> {
        let n = s.nrows();
        if s.ncols() != n {
            return Err(Error::Dimension(format!("cholesky needs a square matrix, got {:?}", s.shape())));
        }
        let mut l = DMatrix::<f64>::zeros(n, n);
        let mut col = vec![0.0; n];
        for j in 0..n {
            for i in j..n {
                col[i] = s[(i, j)];
            }
            for k in 0..j {
                let ljk = l[(j, k)];
                if ljk == 0.0 {
                    continue;
                }
                let lk = l.column(k);
                for i in j..n {
                    col[i] -= lk[i] * ljk;
                }
            }
            let d = col[j];
            if !(d > 0.0) || !d.is_finite() {
                return Err(Error::NotPositiveDefinite { pivot: j });
            }
            let root = d.sqrt();
            let mut lj = l.column_mut(j);
            lj[j] = root;
            for i in (j + 1)..n {
                lj[i] = col[i] / root;
            }
        }
        Ok(Cholesky { l })
    }

    pub fn dim(&self) -> usize {
        self.l.nrows()
    }

    pub fn factor_matrix(&self) -> &DMatrix<f64> {
        &self.l
    }

    /// `log |S| = 2 Σ log L_ii`.
    pub fn logdet(&self) -> f64 {
        2.0 * self.l.diagonal().iter().map(|d| d.ln()).sum::<f64>()
    }

    /// Solves `L z = y` in place.
    fn forward(&self, z: &mut [f64]) {
        let n = self.dim();
        for k in 0..n {
            z[k] /= self.l[(k, k)];
            let zk = z[k];
            let lk = self.l.column(k);
            for i in (k + 1)..n {
                z[i] -= lk[i] * zk;
            }
        }
    }

    /// Solves `Lᵀ x = z` in place.
    fn backward(&self, x: &mut [f64]) {
        let n = self.dim();
        for i in (0..n).rev() {
            let li = self.l.column(i);
            let mut s = x[i];
            for k in (i + 1)..n {
                s -= li[k] * x[k];
            }
            x[i] = s / li[i];
        }
    }

    pub fn solve(&self, y: &DVector<f64>) -> DVector<f64> {
        let mut x = y.clone();
        self.forward(x.as_mut_slice());
        self.backward(x.as_mut_slice());
        x
    }

    /// Full inverse `S⁻¹`, column by column.
    pub fn inverse(&self) -> DMatrix<f64> {
        let n = self.dim();
        let mut inv = DMatrix::<f64>::identity(n, n);
        for j in 0..n {
            let mut col = inv.column_mut(j);
            let s = col.as_mut_slice();
            self.forward(s);
            self.backward(s);
        }
        // Symmetrise away the rounding asymmetry.
        for j in 0..n {
            for i in (j + 1)..n {
                let v = 0.5 * (inv[(i, j)] + inv[(j, i)]);
                inv[(i, j)] = v;
                inv[(j, i)] = v;
            }
        }
        inv
    }
}

/// Returns `(S⁻¹ y, log |S|)` for symmetric positive-definite `S`.
pub fn cholesky_logdet_solve(s: &DMatrix<f64>, y: &DVector<f64>) -> Result<(DVector<f64>, f64)> {
    let n = s.nrows();
    if s.ncols() != n || y.len() != n {
        return Err(Error::Dimension(format!("matrix {:?} vs rhs {}", s.shape(), y.len())));
    }
    let scale = s.amax().max(f64::MIN_POSITIVE);
    for j in 0..n {
        for i in (j + 1)..n {
            if (s[(i, j)] - s[(j, i)]).abs() > 1e-10 * scale {
                return Err(Error::invalid(format!("matrix not symmetric at ({i}, {j})")));
            }
        }
    }
    let chol = Cholesky::factor(s)?;
    Ok((chol.solve(y), chol.logdet()))
}

/// Factors `s + jitter·I`, starting from `1e-10·trace/n` and escalating ×10
/// up to three times. Returns the factor and the jitter actually applied.
pub fn factor_with_jitter(s: &DMatrix<f64>) -> Result<(Cholesky, f64)> {
    let n = s.nrows();
    if n == 0 {
        return Err(Error::Dimension("empty kernel matrix".into()));
    }
    let base = 1e-10 * s.trace() / n as f64;
    let mut jitter = if base > 0.0 { base } else { 1e-10 };
    let mut last = Error::NotPositiveDefinite { pivot: 0 };
    for _ in 0..4 {
        let mut m = s.clone();
        for i in 0..n {
            m[(i, i)] += jitter;
        }
        match Cholesky::factor(&m) {
            Ok(c) => return Ok((c, jitter)),
            Err(e) => last = e,
        }
        jitter *= 10.0;
    }
    Err(last)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn identity() {
        let (alpha, logdet) =
            cholesky_logdet_solve(&DMatrix::identity(3, 3), &DVector::from_vec(vec![1.0, 2.0, 3.0])).unwrap();
        assert_eq!(alpha.as_slice(), &[1.0, 2.0, 3.0]);
        assert_eq!(logdet, 0.0);
    }

    #[test]
    fn diagonal() {
        let s = DMatrix::from_row_slice(2, 2, &[4.0, 0.0, 0.0, 9.0]);
        let (alpha, logdet) = cholesky_logdet_solve(&s, &DVector::from_vec(vec![4.0, 9.0])).unwrap();
        assert!((alpha[0] - 1.0).abs() < 1e-15 && (alpha[1] - 1.0).abs() < 1e-15);
        assert!((logdet - 36f64.ln()).abs() < 1e-14);
    }

    #[test]
    fn two_by_two_by_hand() {
        let s = DMatrix::from_row_slice(2, 2, &[2.0, 1.0, 1.0, 2.0]);
        let (alpha, logdet) = cholesky_logdet_solve(&s, &DVector::from_vec(vec![1.0, 0.0])).unwrap();
        assert!((alpha[0] - 2.0 / 3.0).abs() < 1e-15);
        assert!((alpha[1] + 1.0 / 3.0).abs() < 1e-15);
        assert!((logdet - 3f64.ln()).abs() < 1e-14);
    }

    #[test]
    fn reports_failing_pivot() {
        let s = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 2.0, 1.0]);
        match Cholesky::factor(&s) {
            Err(Error::NotPositiveDefinite { pivot }) => assert_eq!(pivot, 1),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn random_spd_round_trip() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for n in [1, 4, 17, 40] {
            let g = DMatrix::from_fn(n, n, |_, _| rng.random_range(-1.0..1.0));
            let s = g.transpose() * &g + DMatrix::identity(n, n);
            let y = DVector::from_fn(n, |_, _| rng.random_range(-1.0..1.0));
            let (alpha, logdet) = cholesky_logdet_solve(&s, &y).unwrap();
            assert!((&s * &alpha - &y).norm() <= 1e-8 * y.norm());
            let det = s.clone().determinant();
            assert!((logdet - det.ln()).abs() < 1e-8 * det.ln().abs().max(1.0));
            let inv = Cholesky::factor(&s).unwrap().inverse();
            assert!((&s * inv - DMatrix::identity(n, n)).amax() < 1e-10);
        }
    }

    #[test]
    fn jitter_rescues_semidefinite() {
        let v = DVector::from_vec(vec![1.0, 2.0, 3.0]);
        let s = &v * v.transpose();
        let (_, jitter) = factor_with_jitter(&s).unwrap();
        assert!(jitter > 0.0);
    }
}
