//! Zero-mean Gaussian-process NARX with an isotropic squared-exponential kernel.

use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Uniform};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::simulate::{one_step_predictions, rmse, NarxPredictor};
use crate::data::{build_hankel, FitData, LagStructure, Normalizer, NormalizerMode};
use crate::error::{Error, Result};
use crate::kernels::{derive_seed, factor_with_jitter, AdamState, Cholesky};

/// Lower bound on the noise variance (normalised units) during training.
pub const GP_NOISE_FLOOR: f64 = 1e-8;

/// Training rows kept when a benchmark provides more.
pub const GP_MAX_ROWS: usize = 1000;

const LOG_BOUND: f64 = 30.0;

/// Kernel hyperparameters stored as natural logarithms.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GpHyperparams {
    pub log_noise_var: f64,
    pub log_signal_var: f64,
    pub log_lengthscale: f64,
}

impl GpHyperparams {
    pub fn new(noise_var: f64, signal_var: f64, lengthscale: f64) -> Result<Self> {
        if !(noise_var > 0.0 && signal_var > 0.0 && lengthscale > 0.0) {
            return Err(Error::invalid("GP hyperparameters must be strictly positive"));
        }
        Ok(GpHyperparams {
            log_noise_var: noise_var.ln(),
            log_signal_var: signal_var.ln(),
            log_lengthscale: lengthscale.ln(),
        })
    }

    pub fn noise_var(&self) -> f64 {
        self.log_noise_var.exp()
    }

    pub fn signal_var(&self) -> f64 {
        self.log_signal_var.exp()
    }

    pub fn lengthscale(&self) -> f64 {
        self.log_lengthscale.exp()
    }

    pub fn to_vec(&self) -> [f64; 3] {
        [self.log_noise_var, self.log_signal_var, self.log_lengthscale]
    }

    pub fn from_slice(v: &[f64]) -> Self {
        GpHyperparams { log_noise_var: v[0], log_signal_var: v[1], log_lengthscale: v[2] }
    }
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Pairwise squared distances between the rows of `h`.
pub fn pairwise_sq_dist(h: &DMatrix<f64>) -> DMatrix<f64> {
    let n = h.nrows();
    let rows: Vec<Vec<f64>> = (0..n).map(|i| h.row(i).iter().copied().collect()).collect();
    let mut d = DMatrix::<f64>::zeros(n, n);
    for j in 0..n {
        for i in (j + 1)..n {
            let v = sq_dist(&rows[i], &rows[j]);
            d[(i, j)] = v;
            d[(j, i)] = v;
        }
    }
    d
}

fn build_sigma(hyper: &GpHyperparams, dist: &DMatrix<f64>) -> (DMatrix<f64>, DMatrix<f64>) {
    let sf2 = hyper.signal_var();
    let inv2l2 = 0.5 / (hyper.lengthscale() * hyper.lengthscale());
    let k = dist.map(|d| sf2 * (-d * inv2l2).exp());
    let mut sigma = k.clone();
    let sn2 = hyper.noise_var();
    for i in 0..sigma.nrows() {
        sigma[(i, i)] += sn2;
    }
    (k, sigma)
}

fn nlml_from_dist(
    hyper: &GpHyperparams,
    dist: &DMatrix<f64>,
    y: &DVector<f64>,
    want_grad: bool,
) -> Result<(f64, Option<[f64; 3]>, Cholesky, DVector<f64>)> {
    let n = y.len();
    let (k, sigma) = build_sigma(hyper, dist);
    let (chol, _) = factor_with_jitter(&sigma)?;
    let alpha = chol.solve(y);
    let nlml = 0.5 * y.dot(&alpha) + 0.5 * chol.logdet() + 0.5 * n as f64 * (2.0 * std::f64::consts::PI).ln();

    let grad = if want_grad {
        // dNLML/dθ = ½ tr((Σ⁻¹ − ααᵀ) ∂Σ/∂θ)
        let inv = chol.inverse();
        let l2 = hyper.lengthscale().powi(2);
        let (mut g_noise, mut g_signal, mut g_len) = (0.0, 0.0, 0.0);
        for j in 0..n {
            for i in 0..n {
                let w = inv[(i, j)] - alpha[i] * alpha[j];
                let kij = k[(i, j)];
                g_signal += w * kij;
                g_len += w * kij * dist[(i, j)] / l2;
                if i == j {
                    g_noise += w;
                }
            }
        }
        Some([0.5 * hyper.noise_var() * g_noise, 0.5 * g_signal, 0.5 * g_len])
    } else {
        None
    };
    Ok((nlml, grad, chol, alpha))
}

/// Negative log marginal likelihood `½yᵀΣ⁻¹y + ½log|Σ| + (N/2)log 2π`.
pub fn gp_nlml(hyper: &GpHyperparams, h: &DMatrix<f64>, y: &DVector<f64>) -> Result<f64> {
    check_problem(h, y)?;
    Ok(nlml_from_dist(hyper, &pairwise_sq_dist(h), y, false)?.0)
}

/// NLML and its gradient with respect to the log-hyperparameters
/// `[log σ_n², log σ_f², log ℓ]`.
pub fn gp_nlml_grad(hyper: &GpHyperparams, h: &DMatrix<f64>, y: &DVector<f64>) -> Result<(f64, [f64; 3])> {
    check_problem(h, y)?;
    let (v, g, _, _) = nlml_from_dist(hyper, &pairwise_sq_dist(h), y, true)?;
    Ok((v, g.expect("gradient requested")))
}

fn check_problem(h: &DMatrix<f64>, y: &DVector<f64>) -> Result<()> {
    if h.nrows() != y.len() || y.is_empty() {
        return Err(Error::Dimension(format!("{} regressor rows vs {} targets", h.nrows(), y.len())));
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GpNarxModel {
    pub lags: LagStructure,
    pub hyper: GpHyperparams,
    pub n_train: usize,
    /// Training regressors, row-major `n_train × (n_y + n_u)`.
    pub h_train: Vec<f64>,
    pub targets: Vec<f64>,
    /// `Σ⁻¹ y` for the stored rows.
    pub alpha: Vec<f64>,
    pub normalizer: Normalizer,
}

impl GpNarxModel {
    /// Builds the predictive cache for fixed hyperparameters.
    pub fn from_data(
        lags: LagStructure,
        hyper: GpHyperparams,
        h: &DMatrix<f64>,
        y: &DVector<f64>,
        normalizer: Normalizer,
    ) -> Result<Self> {
        check_problem(h, y)?;
        let width = lags.width();
        if h.ncols() < width {
            return Err(Error::Dimension(format!("{} columns, lag structure needs {width}", h.ncols())));
        }
        let hw = h.columns(0, width).into_owned();
        let (_, sigma) = build_sigma(&hyper, &pairwise_sq_dist(&hw));
        let (chol, _) = factor_with_jitter(&sigma)?;
        let alpha = chol.solve(y);
        let mut flat = Vec::with_capacity(hw.nrows() * width);
        for i in 0..hw.nrows() {
            flat.extend(hw.row(i).iter());
        }
        Ok(GpNarxModel {
            lags,
            hyper,
            n_train: hw.nrows(),
            h_train: flat,
            targets: y.iter().copied().collect(),
            alpha: alpha.iter().copied().collect(),
            normalizer,
        })
    }

    fn train_row(&self, i: usize) -> &[f64] {
        let w = self.lags.width();
        &self.h_train[i * w..(i + 1) * w]
    }

    /// `max_i |Σ·α − y|_i`, a consistency check on the cached solve.
    pub fn cache_residual(&self) -> f64 {
        let sf2 = self.hyper.signal_var();
        let inv2l2 = 0.5 / self.hyper.lengthscale().powi(2);
        (0..self.n_train)
            .map(|i| {
                let mut s = self.hyper.noise_var() * self.alpha[i];
                for j in 0..self.n_train {
                    s += sf2 * (-sq_dist(self.train_row(i), self.train_row(j)) * inv2l2).exp() * self.alpha[j];
                }
                (s - self.targets[i]).abs()
            })
            .fold(0.0, f64::max)
    }
}

/// Predictive mean `k(h, H)·α` in normalised output units.
pub fn gp_predict_mean(model: &GpNarxModel, h_row: &[f64]) -> f64 {
    let sf2 = model.hyper.signal_var();
    let inv2l2 = 0.5 / model.hyper.lengthscale().powi(2);
    (0..model.n_train)
        .map(|i| sf2 * (-sq_dist(h_row, model.train_row(i)) * inv2l2).exp() * model.alpha[i])
        .sum()
}

impl NarxPredictor for GpNarxModel {
    fn lags(&self) -> LagStructure {
        self.lags
    }

    fn normalizer(&self) -> &Normalizer {
        &self.normalizer
    }

    fn predict_row(&self, row: &[f64]) -> f64 {
        gp_predict_mean(self, row)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GpOptions {
    pub restarts: usize,
    pub steps: usize,
    pub lr: f64,
    pub max_rows: usize,
    pub seed: u64,
}

impl Default for GpOptions {
    fn default() -> Self {
        GpOptions { restarts: 5, steps: 1000, lr: 1e-2, max_rows: GP_MAX_ROWS, seed: 0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GpFitInfo {
    pub train_rows: usize,
    pub truncated: bool,
    pub restart_val_rmse: Vec<f64>,
    pub final_nlml: f64,
}

/// Minimises the NLML with ADAM from a given start; returns the last
/// iterate that could be evaluated and its NLML.
pub fn optimise_hyperparams(
    start: GpHyperparams,
    dist: &DMatrix<f64>,
    y: &DVector<f64>,
    steps: usize,
    lr: f64,
) -> Result<(GpHyperparams, f64)> {
    let mut p = start.to_vec().to_vec();
    let mut adam = AdamState::new(3, lr);
    let mut last_good = (start, f64::INFINITY);
    for _ in 0..steps {
        let hyper = GpHyperparams::from_slice(&p);
        let (nlml, grad) = match nlml_from_dist(&hyper, dist, y, true) {
            Ok((v, Some(g), _, _)) if v.is_finite() => (v, g),
            _ => break,
        };
        last_good = (hyper, nlml);
        if adam.step(&mut p, &grad).is_err() {
            break;
        }
        p[0] = p[0].max(GP_NOISE_FLOOR.ln());
        for v in p.iter_mut() {
            *v = v.clamp(-LOG_BOUND, LOG_BOUND);
        }
    }
    let hyper = GpHyperparams::from_slice(&p);
    match nlml_from_dist(&hyper, dist, y, false) {
        Ok((v, _, _, _)) if v.is_finite() => Ok((hyper, v)),
        _ if last_good.1.is_finite() => Ok(last_good),
        _ => Err(Error::Training("GP hyperparameter optimisation never produced a finite NLML".into())),
    }
}

/// Trains hyperparameters from seeded random starts and keeps the restart
/// with the best validation one-step RMSE.
pub fn fit_gp_narx(data: &FitData, lags: LagStructure, opts: &GpOptions) -> Result<(GpNarxModel, GpFitInfo)> {
    let normalizer = Normalizer::fit(&data.train, NormalizerMode::Zscore)?;
    let tr = normalizer.apply(&data.train);
    let (h_all, y_all) = build_hankel(&tr.u, &tr.y, lags)?;
    let rows = h_all.nrows().min(opts.max_rows);
    let truncated = rows < h_all.nrows();
    let h = h_all.view((0, 0), (rows, lags.width())).into_owned();
    let y = y_all.rows(0, rows).into_owned();
    let dist = pairwise_sq_dist(&h);

    let y_var = (y.norm_squared() / rows as f64).max(1e-12);
    let len_scale = (lags.width() as f64).sqrt();
    let p = lags.max_lag();

    let results: Vec<(usize, Result<(GpNarxModel, f64, f64)>)> = (0..opts.restarts.max(1))
        .into_par_iter()
        .map(|r| {
            let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(opts.seed, &[r as u64]));
            let mult = Uniform::new(-2.0, 2.0).expect("valid range");
            let start = GpHyperparams {
                log_noise_var: (1e-2 * y_var).ln() + mult.sample(&mut rng),
                log_signal_var: y_var.ln() + mult.sample(&mut rng),
                log_lengthscale: len_scale.ln() + mult.sample(&mut rng),
            };
            let out = optimise_hyperparams(start, &dist, &y, opts.steps, opts.lr).and_then(|(hyper, nlml)| {
                let model = GpNarxModel::from_data(lags, hyper, &h, &y, normalizer.clone())?;
                let pred = one_step_predictions(&model, &data.validation, p)?;
                let v = rmse(&pred, &data.validation.y[p..]);
                Ok((model, if v.is_finite() { v } else { f64::INFINITY }, nlml))
            });
            (r, out)
        })
        .collect();

    let mut restart_val_rmse = Vec::with_capacity(results.len());
    let mut best: Option<(GpNarxModel, f64, f64)> = None;
    for (r, res) in results {
        match res {
            Ok((m, v, nlml)) => {
                restart_val_rmse.push(v);
                if best.as_ref().map_or(true, |(_, bv, _)| v < *bv) {
                    best = Some((m, v, nlml));
                }
            }
            Err(e) => {
                log::warn!("GP restart {r} failed: {e}");
                restart_val_rmse.push(f64::INFINITY);
            }
        }
    }
    let (model, _, final_nlml) = best.ok_or_else(|| Error::Training("all GP restarts failed".into()))?;
    Ok((model, GpFitInfo { train_rows: rows, truncated, restart_val_rmse, final_nlml }))
}
