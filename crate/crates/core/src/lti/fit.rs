use serde::{Deserialize, Serialize};

use super::model::{simulate_ss, StateSpaceModel};
use super::pem::{pem_refine, PemOptions};
use super::subspace::subspace_init;
use crate::data::{FitData, Normalizer, NormalizerMode};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LtiFitInfo {
    pub n_x: usize,
    pub init_val_rmse: f64,
    pub val_rmse: f64,
    pub pem_best_step: usize,
    pub pem_diverged: bool,
    /// The subspace estimate was unstable and its A matrix was shrunk
    /// radially to spectral radius 0.99 before refinement.
    pub init_stabilized: bool,
}

/// Mean removal, subspace initialisation and output-error refinement.
pub fn fit_lti_ss(data: &FitData, n_x: usize, opts: &PemOptions) -> Result<(StateSpaceModel, LtiFitInfo)> {
    if n_x == 0 {
        return Err(Error::invalid("state order must be at least 1"));
    }
    let norm = Normalizer::fit(&data.train, NormalizerMode::MeanOnly)?;
    let centred = norm.apply(&data.train);
    let mut init = subspace_init(&centred, n_x)?.with_means(norm.u_mean, norm.y_mean);

    let rho = init.spectral_radius();
    let init_stabilized = rho >= 1.0;
    if init_stabilized {
        log::warn!("subspace estimate unstable (rho = {rho:.4}); shrinking A");
        init.a *= 0.99 / rho;
    }

    let out = pem_refine(&init, &data.train, &data.validation, opts)?;
    let info = LtiFitInfo {
        n_x,
        init_val_rmse: out.init_val_rmse,
        val_rmse: out.best_val_rmse,
        pem_best_step: out.best_step,
        pem_diverged: out.diverged,
        init_stabilized,
    };
    Ok((out.model, info))
}

/// Grid search over state orders by validation simulation RMSE.
pub fn select_state_order(
    data: &FitData,
    orders: &[usize],
    opts: &PemOptions,
) -> Result<(StateSpaceModel, LtiFitInfo)> {
    let mut best: Option<(StateSpaceModel, LtiFitInfo)> = None;
    for &n_x in orders {
        match fit_lti_ss(data, n_x, opts) {
            Ok((m, info)) => {
                let better = best.as_ref().map_or(true, |(_, b)| info.val_rmse < b.val_rmse);
                if better && m.is_stable() {
                    best = Some((m, info));
                }
            }
            Err(e) => log::info!("state order {n_x} rejected: {e}"),
        }
    }
    best.ok_or_else(|| Error::Training("no state order produced a stable model".into()))
}

/// Validation RMSE helper shared with the harness.
pub fn simulation_rmse(model: &StateSpaceModel, u: &[f64], y: &[f64]) -> Result<f64> {
    let yhat = simulate_ss(model, u, None)?;
    Ok((yhat.iter().zip(y).map(|(a, b)| (a - b) * (a - b)).sum::<f64>() / y.len() as f64).sqrt())
}
