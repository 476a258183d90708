use crate::error::{Error, Result};

/// Central finite-difference gradient with step `1e-6·(1 + |xᵢ|)`.
pub fn finite_diff_grad<F>(mut f: F, x: &[f64]) -> Result<Vec<f64>>
where
    F: FnMut(&[f64]) -> f64,
{
    let mut probe = x.to_vec();
    let mut grad = Vec::with_capacity(x.len());
    for i in 0..x.len() {
        let h = 1e-6 * (1.0 + x[i].abs());
        probe[i] = x[i] + h;
        let fp = f(&probe);
        probe[i] = x[i] - h;
        let fm = f(&probe);
        probe[i] = x[i];
        if !fp.is_finite() || !fm.is_finite() {
            return Err(Error::NonFinite { index: i, context: "objective under perturbation".into() });
        }
        grad.push((fp - fm) / (2.0 * h));
    }
    Ok(grad)
}

/// Largest componentwise relative error, normalised by the larger gradient norm.
pub fn relative_gradient_error(analytic: &[f64], numeric: &[f64]) -> f64 {
    let scale = analytic
        .iter()
        .chain(numeric)
        .fold(0.0_f64, |m, v| m.max(v.abs()))
        .max(1e-12);
    analytic
        .iter()
        .zip(numeric)
        .map(|(a, b)| (a - b).abs() / scale)
        .fold(0.0, f64::max)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn square() {
        let g = finite_diff_grad(|x| x[0] * x[0], &[3.0]).unwrap();
        assert!((g[0] - 6.0).abs() < 1e-6);
    }

    #[test]
    fn constant() {
        let g = finite_diff_grad(|_| 4.2, &[1.0, -3.0, 0.0]).unwrap();
        assert!(g.iter().all(|v| *v == 0.0));
    }

    #[test]
    fn sum_of_squares() {
        let g = finite_diff_grad(|x| x.iter().map(|v| v * v).sum(), &[1.0, -2.0]).unwrap();
        assert!((g[0] - 2.0).abs() < 1e-6 && (g[1] + 4.0).abs() < 1e-6);
    }

    #[test]
    fn polynomial_self_test() {
        // f = x0³ x1 + 2 x1² - x0 x2 + 5
        let f = |x: &[f64]| x[0].powi(3) * x[1] + 2.0 * x[1] * x[1] - x[0] * x[2] + 5.0;
        let x: [f64; 3] = [1.3, -0.7, 2.1];
        let analytic = [3.0 * x[0] * x[0] * x[1] - x[2], x[0].powi(3) + 4.0 * x[1], -x[0]];
        let numeric = finite_diff_grad(f, &x).unwrap();
        assert!(relative_gradient_error(&analytic, &numeric) < 1e-6);
    }

    #[test]
    fn non_finite_objective() {
        let r = finite_diff_grad(|x| if x[0] > 0.0 { f64::NAN } else { 0.0 }, &[0.0]);
        assert!(matches!(r, Err(Error::NonFinite { index: 0, .. })));
    }
}
