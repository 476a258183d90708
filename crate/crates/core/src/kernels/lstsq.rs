//! Dense least squares by Householder QR with column pivoting.
//!
//! Full-rank problems are solved from the triangular factor. When the
//! pivoted diagonal reveals a rank deficiency the minimum-norm solution is
//! taken from an SVD instead, since plain QR back-substitution would pick an
//! arbitrary member of the solution affine space.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// Pivoted Householder factorisation `A P = Q R` kept in compact form.
struct PivotedQr {
    /// Upper triangle holds R; the Householder vectors are discarded once applied.
    r: DMatrix<f64>,
    perm: Vec<usize>,
    rank: usize,
}

fn factor_and_apply(a: &DMatrix<f64>, rhs: &mut DVector<f64>) -> PivotedQr {
    let (m, n) = a.shape();
    let mut r = a.clone();
    let mut perm: Vec<usize> = (0..n).collect();
    let mut v = vec![0.0; m];
    let mut first_pivot = 0.0_f64;
    let mut rank = 0;

    for k in 0..n {
        // Pick the remaining column with the largest trailing norm.
        let mut best = k;
        let mut best_norm = -1.0;
        for j in k..n {
            let col = r.column(j);
            let s: f64 = col.rows(k, m - k).iter().map(|x| x * x).sum();
            if s > best_norm {
                best_norm = s;
                best = j;
            }
        }
        if best != k {
            r.swap_columns(k, best);
            perm.swap(k, best);
        }

        let norm = best_norm.sqrt();
        if k == 0 {
            first_pivot = norm;
        }
        let tol = (m.max(n) as f64) * f64::EPSILON * first_pivot;
        if norm <= tol || norm == 0.0 {
            break;
        }
        rank += 1;

        let x0 = r[(k, k)];
        let alpha = if x0 >= 0.0 { -norm } else { norm };
        for i in k..m {
            v[i] = r[(i, k)];
        }
        v[k] -= alpha;
        let vtv: f64 = v[k..m].iter().map(|x| x * x).sum();
        if vtv == 0.0 {
            continue;
        }
        let beta = 2.0 / vtv;

        for j in k..n {
            let mut col = r.column_mut(j);
            let mut dot = 0.0;
            for i in k..m {
                dot += v[i] * col[i];
            }
            let s = beta * dot;
            for i in k..m {
                col[i] -= s * v[i];
            }
        }
        let mut dot = 0.0;
        for i in k..m {
            dot += v[i] * rhs[i];
        }
        let s = beta * dot;
        for i in k..m {
            rhs[i] -= s * v[i];
        }
    }

    PivotedQr { r, perm, rank }
}

/// Least-squares solution of `A x ≈ b` for a tall (or square) matrix.
///
/// Rank-deficient systems resolve to the minimum-norm minimiser.
pub fn solve_least_squares_qr(a: &DMatrix<f64>, b: &DVector<f64>) -> Result<DVector<f64>> {
    let (m, n) = a.shape();
    if m < n {
        return Err(Error::Dimension(format!("least squares needs rows >= cols, got {m}x{n}")));
    }
    if b.len() != m {
        return Err(Error::Dimension(format!("rhs length {} != rows {m}", b.len())));
    }
    if let Some(i) = a.iter().position(|x| !x.is_finite()) {
        return Err(Error::NonFinite { index: i, context: "least squares matrix".into() });
    }
    if let Some(i) = b.iter().position(|x| !x.is_finite()) {
        return Err(Error::NonFinite { index: i, context: "least squares rhs".into() });
    }
    if n == 0 {
        return Ok(DVector::zeros(0));
    }

    let mut qtb = b.clone();
    let qr = factor_and_apply(a, &mut qtb);

    if qr.rank < n {
        return Ok(min_norm_svd(a, b));
    }

    let mut z = vec![0.0; n];
    for i in (0..n).rev() {
        let mut s = qtb[i];
        for j in (i + 1)..n {
            s -= qr.r[(i, j)] * z[j];
        }
        z[i] = s / qr.r[(i, i)];
    }
    let mut x = DVector::zeros(n);
    for (k, &col) in qr.perm.iter().enumerate() {
        x[col] = z[k];
    }
    Ok(x)
}

fn min_norm_svd(a: &DMatrix<f64>, b: &DVector<f64>) -> DVector<f64> {
    let svd = a.clone().svd(true, true);
    let smax = svd.singular_values.iter().cloned().fold(0.0, f64::max);
    let (m, n) = a.shape();
    let eps = (m.max(n) as f64) * f64::EPSILON * smax;
    svd.solve(b, eps).unwrap_or_else(|_| DVector::zeros(n))
}

/// Numerical rank as revealed by the pivoted QR diagonal.
pub fn numerical_rank(a: &DMatrix<f64>) -> usize {
    let mut dummy = DVector::zeros(a.nrows());
    factor_and_apply(a, &mut dummy).rank
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn identity_system() {
        let a = DMatrix::identity(2, 2);
        let b = DVector::from_vec(vec![3.0, 4.0]);
        let x = solve_least_squares_qr(&a, &b).unwrap();
        assert!((x[0] - 3.0).abs() < 1e-15 && (x[1] - 4.0).abs() < 1e-15);
    }

    #[test]
    fn mean_of_two_points() {
        let a = DMatrix::from_column_slice(2, 1, &[1.0, 1.0]);
        let b = DVector::from_vec(vec![1.0, 3.0]);
        let x = solve_least_squares_qr(&a, &b).unwrap();
        assert!((x[0] - 2.0).abs() < 1e-15);
    }

    #[test]
    fn recovers_planted_solution() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let a = DMatrix::from_fn(50, 5, |_, _| rng.random_range(-1.0..1.0));
        let truth = DVector::from_vec(vec![1.5, -2.0, 0.25, 3.0, -0.75]);
        let b = &a * &truth;
        let x = solve_least_squares_qr(&a, &b).unwrap();
        assert!((x - truth).amax() < 1e-10);
    }

    #[test]
    fn rank_deficient_gives_min_norm() {
        // Two identical columns: solutions x0 + x1 = 2, min norm is (1, 1).
        let a = DMatrix::from_column_slice(3, 2, &[1.0, 1.0, 1.0, 1.0, 1.0, 1.0]);
        let b = DVector::from_vec(vec![2.0, 2.0, 2.0]);
        let x = solve_least_squares_qr(&a, &b).unwrap();
        assert!((x[0] - 1.0).abs() < 1e-12 && (x[1] - 1.0).abs() < 1e-12);
        assert_eq!(numerical_rank(&a), 1);
    }

    #[test]
    fn errors() {
        let a = DMatrix::<f64>::zeros(1, 2);
        assert!(matches!(
            solve_least_squares_qr(&a, &DVector::zeros(1)),
            Err(Error::Dimension(_))
        ));
        let mut a = DMatrix::<f64>::identity(2, 2);
        a[(1, 0)] = f64::NAN;
        assert!(matches!(
            solve_least_squares_qr(&a, &DVector::zeros(2)),
            Err(Error::NonFinite { .. })
        ));
    }

    #[test]
    fn normal_equation_residual_is_small() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let a = DMatrix::from_fn(40, 6, |_, _| rng.random_range(-1.0..1.0));
        let b = DVector::from_fn(40, |_, _| rng.random_range(-1.0..1.0));
        let x = solve_least_squares_qr(&a, &b).unwrap();
        let r = &a * &x - &b;
        let atr = a.transpose() * r;
        let atb = a.transpose() * &b;
        assert!(atr.norm() <= 1e-10 * atb.norm());
    }
}
