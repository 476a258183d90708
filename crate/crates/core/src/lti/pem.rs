//! Output-error refinement: ADAM on the free-run simulation error with
//! gradients from backpropagation through the unrolled state recursion.

use serde::{Deserialize, Serialize};

use super::model::{simulate_ss, StateSpaceModel};
use crate::data::TimeSeries;
use crate::error::{Error, Result};
use crate::kernels::AdamState;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PemOptions {
    pub steps: usize,
    pub lr: f64,
    /// Validation RMSE is checked every this many steps.
    pub eval_every: usize,
}

impl Default for PemOptions {
    fn default() -> Self {
        PemOptions { steps: 5000, lr: 1e-3, eval_every: 1 }
    }
}

#[derive(Debug, Clone)]
pub struct PemOutcome {
    pub model: StateSpaceModel,
    pub init_val_rmse: f64,
    pub best_val_rmse: f64,
    /// Step at which the returned iterate was taken (0 = the initial model).
    pub best_step: usize,
    /// The loss became non-finite and training stopped early.
    pub diverged: bool,
}

/// Mean squared free-run error on mean-removed signals, zero initial state.
/// When `grad` is given it receives the gradient w.r.t. `[vec_row(A), B, C, D]`.
pub fn simulation_loss(n: usize, params: &[f64], u: &[f64], y: &[f64], grad: Option<&mut [f64]>) -> f64 {
    let len = u.len();
    let (a, rest) = params.split_at(n * n);
    let (b, rest) = rest.split_at(n);
    let (c, rest) = rest.split_at(n);
    let d = rest[0];

    let mut xs = vec![0.0; (len + 1) * n];
    let mut errs = vec![0.0; len];
    let mut loss = 0.0;
    for t in 0..len {
        let (cur, next) = xs[t * n..(t + 2) * n].split_at_mut(n);
        let mut yhat = d * u[t];
        for i in 0..n {
            yhat += c[i] * cur[i];
        }
        let e = yhat - y[t];
        errs[t] = e;
        loss += e * e;
        for i in 0..n {
            let mut s = b[i] * u[t];
            let row = &a[i * n..(i + 1) * n];
            for j in 0..n {
                s += row[j] * cur[j];
            }
            next[i] = s;
        }
    }
    loss /= len as f64;

    if let Some(g) = grad {
        g.iter_mut().for_each(|v| *v = 0.0);
        let (ga, rest) = g.split_at_mut(n * n);
        let (gb, rest) = rest.split_at_mut(n);
        let (gc, gd) = rest.split_at_mut(n);
        let mut lam_next = vec![0.0; n];
        let mut lam = vec![0.0; n];
        for t in (0..len).rev() {
            let gt = 2.0 * errs[t] / len as f64;
            let x = &xs[t * n..(t + 1) * n];
            for i in 0..n {
                let l = lam_next[i];
                if l != 0.0 {
                    for j in 0..n {
                        ga[i * n + j] += l * x[j];
                    }
                    gb[i] += l * u[t];
                }
                gc[i] += gt * x[i];
            }
            gd[0] += gt * u[t];
            for j in 0..n {
                let mut s = c[j] * gt;
                for i in 0..n {
                    s += a[i * n + j] * lam_next[i];
                }
                lam[j] = s;
            }
            std::mem::swap(&mut lam, &mut lam_next);
        }
    }
    loss
}

fn rmse(a: &[f64], b: &[f64]) -> f64 {
    (a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>() / a.len() as f64).sqrt()
}

fn validation_rmse(model: &StateSpaceModel, val: &TimeSeries) -> f64 {
    match simulate_ss(model, &val.u, None) {
        Ok(yhat) => rmse(&yhat, &val.y),
        Err(_) => f64::INFINITY,
    }
}

/// Refines `init` on `train` (physical units; the model's stored means are
/// removed) and returns the stable iterate with the lowest validation
/// simulation RMSE, never worse than `init`.
pub fn pem_refine(
    init: &StateSpaceModel,
    train: &TimeSeries,
    validation: &TimeSeries,
    opts: &PemOptions,
) -> Result<PemOutcome> {
    if !init.is_stable() {
        return Err(Error::Unstable(format!(
            "initial model has spectral radius {:.6}",
            init.spectral_radius()
        )));
    }
    let n = init.order();
    let u: Vec<f64> = train.u.iter().map(|v| v - init.u_mean).collect();
    let y: Vec<f64> = train.y.iter().map(|v| v - init.y_mean).collect();

    let mut params = init.to_params();
    let mut grad = vec![0.0; params.len()];
    let mut adam = AdamState::new(params.len(), opts.lr);

    let init_val = validation_rmse(init, validation);
    let mut best = init.clone();
    let mut best_val = init_val;
    let mut best_step = 0;
    let mut diverged = false;
    let every = opts.eval_every.max(1);

    for step in 1..=opts.steps {
        let loss = simulation_loss(n, &params, &u, &y, Some(&mut grad));
        if !loss.is_finite() || adam.step(&mut params, &grad).is_err() {
            diverged = true;
            log::warn!("pem diverged at step {step}; keeping step {best_step}");
            break;
        }
        if step % every == 0 || step == opts.steps {
            let cand = StateSpaceModel::from_params(n, &params, init.u_mean, init.y_mean);
            if !cand.is_stable() {
                continue;
            }
            let v = validation_rmse(&cand, validation);
            if v < best_val {
                best_val = v;
                best = cand;
                best_step = step;
            }
        }
    }
    Ok(PemOutcome { model: best, init_val_rmse: init_val, best_val_rmse: best_val, best_step, diverged })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernels::{finite_diff_grad, relative_gradient_error};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn gradient_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for n in 1..=3 {
            let mut p: Vec<f64> = (0..n * n + 2 * n + 1).map(|_| rng.random_range(-0.5..0.5)).collect();
            for i in 0..n {
                p[i * n + i] *= 0.5;
            }
            let u: Vec<f64> = (0..40).map(|_| rng.random_range(-1.0..1.0)).collect();
            let y: Vec<f64> = (0..40).map(|_| rng.random_range(-1.0..1.0)).collect();
            let mut g = vec![0.0; p.len()];
            simulation_loss(n, &p, &u, &y, Some(&mut g));
            let fd = finite_diff_grad(|q| simulation_loss(n, q, &u, &y, None), &p).unwrap();
            assert!(relative_gradient_error(&g, &fd) < 1e-6, "n={n}");
        }
    }
}
