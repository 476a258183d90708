use crate::error::{Error, Result};

/// Smallest RSS accepted by [`compute_aic`]; exact fits are floored here.
pub const RSS_FLOOR: f64 = 1e-300;

/// Residual energy below this fraction of the target energy is treated as
/// an exact fit, so round-off does not decide between exact models.
pub const RELATIVE_RSS_FLOOR: f64 = 1e-20;

/// Root mean squared error over samples `t ≥ burn_in`.
pub fn compute_rmse(y: &[f64], yhat: &[f64], burn_in: usize) -> Result<f64> {
    if y.len() != yhat.len() {
        return Err(Error::Dimension(format!("lengths {} and {} differ", y.len(), yhat.len())));
    }
    if burn_in >= y.len() {
        return Err(Error::invalid(format!("burn-in {burn_in} leaves no samples of {}", y.len())));
    }
    let n = (y.len() - burn_in) as f64;
    let sse: f64 = y[burn_in..].iter().zip(&yhat[burn_in..]).map(|(a, b)| (a - b) * (a - b)).sum();
    Ok((sse / n).sqrt())
}

/// `N·ln(rss/N) + 2k`. Returns the score and whether the RSS was floored.
pub fn compute_aic(rss: f64, n: usize, k: usize) -> Result<(f64, bool)> {
    if n == 0 {
        return Err(Error::invalid("AIC needs at least one residual"));
    }
    if !rss.is_finite() || rss < 0.0 {
        return Err(Error::invalid(format!("residual sum of squares must be non-negative, got {rss}")));
    }
    let floored = rss < RSS_FLOOR;
    let rss = rss.max(RSS_FLOOR);
    let n = n as f64;
    Ok((n * (rss / n).ln() + 2.0 * k as f64, floored))
}

/// RSS with the relative exact-fit floor applied.
pub fn floored_rss(rss: f64, target_energy: f64) -> f64 {
    rss.max(RELATIVE_RSS_FLOOR * target_energy)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rmse_hand_cases() {
        assert_eq!(compute_rmse(&[1.0, 2.0], &[1.0, 2.0], 0).unwrap(), 0.0);
        assert!((compute_rmse(&[0.0, 0.0], &[3.0, 4.0], 0).unwrap() - 12.5f64.sqrt()).abs() < 1e-12);
        assert!((compute_rmse(&[9.0, 0.0, 0.0], &[0.0, 3.0, 4.0], 1).unwrap() - 12.5f64.sqrt()).abs() < 1e-12);
        assert!(compute_rmse(&[1.0], &[1.0, 2.0], 0).is_err());
        assert!(compute_rmse(&[1.0], &[1.0], 1).is_err());
    }

    #[test]
    fn aic_hand_cases() {
        assert_eq!(compute_aic(100.0, 100, 3).unwrap().0, 6.0);
        let (a3, _) = compute_aic(7.0, 50, 3).unwrap();
        let (a6, _) = compute_aic(7.0, 50, 6).unwrap();
        assert!((a6 - a3 - 6.0).abs() < 1e-12);
        assert!(a3 < a6);
        let (_, floored) = compute_aic(0.0, 10, 1).unwrap();
        assert!(floored);
        assert!(compute_aic(-1.0, 10, 1).is_err());
    }
}
