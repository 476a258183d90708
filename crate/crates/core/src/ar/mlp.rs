//! Single-hidden-layer tanh network over the NARX regressor.

use nalgebra::DMatrix;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Uniform};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::simulate::{free_run_rmse, NarxPredictor};
use crate::data::{build_hankel, FitData, LagStructure, Normalizer, NormalizerMode};
use crate::error::{Error, Result};
use crate::kernels::{derive_seed, AdamState};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MlpNarxModel {
    pub lags: LagStructure,
    pub hidden_size: usize,
    /// Input-to-hidden weights, row-major `hidden_size × (n_y + n_u)`.
    pub w1: Vec<f64>,
    pub b1: Vec<f64>,
    pub w2: Vec<f64>,
    pub b2: f64,
    pub normalizer: Normalizer,
}

/// Parameter count of a network with `d` inputs and `h` hidden units.
pub fn mlp_param_count(d: usize, h: usize) -> usize {
    h * d + 2 * h + 1
}

impl MlpNarxModel {
    pub fn from_params(lags: LagStructure, hidden_size: usize, p: &[f64], normalizer: Normalizer) -> Result<Self> {
        let d = lags.width();
        let h = hidden_size;
        if p.len() != mlp_param_count(d, h) {
            return Err(Error::Dimension(format!("{} parameters for a {d}-{h}-1 network", p.len())));
        }
        Ok(MlpNarxModel {
            lags,
            hidden_size: h,
            w1: p[..h * d].to_vec(),
            b1: p[h * d..h * d + h].to_vec(),
            w2: p[h * d + h..h * d + 2 * h].to_vec(),
            b2: p[h * d + 2 * h],
            normalizer,
        })
    }

    pub fn to_params(&self) -> Vec<f64> {
        let mut p = Vec::with_capacity(mlp_param_count(self.lags.width(), self.hidden_size));
        p.extend(&self.w1);
        p.extend(&self.b1);
        p.extend(&self.w2);
        p.push(self.b2);
        p
    }
}

#[cfg(test)]
fn forward(d: usize, h: usize, p: &[f64], row: &[f64]) -> f64 {
    let (w1, rest) = p.split_at(h * d);
    let (b1, rest) = rest.split_at(h);
    let (w2, rest) = rest.split_at(h);
    let mut s = rest[0];
    for k in 0..h {
        let a: f64 = w1[k * d..(k + 1) * d].iter().zip(row).map(|(w, x)| w * x).sum::<f64>() + b1[k];
        s += w2[k] * a.tanh();
    }
    s
}

impl NarxPredictor for MlpNarxModel {
    fn lags(&self) -> LagStructure {
        self.lags
    }

    fn normalizer(&self) -> &Normalizer {
        &self.normalizer
    }

    fn predict_row(&self, row: &[f64]) -> f64 {
        let d = self.lags.width();
        let h = self.hidden_size;
        let mut s = self.b2;
        for k in 0..h {
            let a: f64 = self.w1[k * d..(k + 1) * d].iter().zip(row).map(|(w, x)| w * x).sum::<f64>() + self.b1[k];
            s += self.w2[k] * a.tanh();
        }
        s
    }
}

/// Mean squared one-step error over the rows of `x` (first `d` columns) and
/// its gradient with respect to the flat parameter vector.
pub fn mlp_loss(d: usize, h: usize, p: &[f64], x: &DMatrix<f64>, y: &[f64], grad: Option<&mut [f64]>) -> f64 {
    let n = y.len();
    let (w1, rest) = p.split_at(h * d);
    let (b1, rest) = rest.split_at(h);
    let (w2, rest) = rest.split_at(h);
    let b2 = rest[0];
    let mut act = vec![0.0; h];
    let mut row = vec![0.0; d];
    let mut loss = 0.0;
    let mut g = grad;
    if let Some(g) = g.as_deref_mut() {
        g.iter_mut().for_each(|v| *v = 0.0);
    }
    let scale = 2.0 / n as f64;
    for i in 0..n {
        for (j, r) in row.iter_mut().enumerate() {
            *r = x[(i, j)];
        }
        let mut out = b2;
        for k in 0..h {
            let a: f64 = w1[k * d..(k + 1) * d].iter().zip(&row).map(|(w, v)| w * v).sum::<f64>() + b1[k];
            act[k] = a.tanh();
            out += w2[k] * act[k];
        }
        let e = out - y[i];
        loss += e * e;
        if let Some(g) = g.as_deref_mut() {
            let ge = scale * e;
            let (gw1, rest) = g.split_at_mut(h * d);
            let (gb1, rest) = rest.split_at_mut(h);
            let (gw2, gb2) = rest.split_at_mut(h);
            gb2[0] += ge;
            for k in 0..h {
                gw2[k] += ge * act[k];
                let gz = ge * w2[k] * (1.0 - act[k] * act[k]);
                gb1[k] += gz;
                for (gw, v) in gw1[k * d..(k + 1) * d].iter_mut().zip(&row) {
                    *gw += gz * v;
                }
            }
        }
    }
    loss / n as f64
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MlpNarxOptions {
    pub hidden_sizes: Vec<usize>,
    pub restarts: usize,
    pub iterations: usize,
    pub lr: f64,
    pub seed: u64,
}

impl Default for MlpNarxOptions {
    fn default() -> Self {
        MlpNarxOptions { hidden_sizes: vec![2, 5, 7, 10], restarts: 5, iterations: 20_000, lr: 1e-3, seed: 0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MlpRun {
    pub hidden_size: usize,
    pub restart: usize,
    pub train_mse: f64,
    pub val_rmse: f64,
}

/// Uniform `±1/√fan_in` initialisation.
pub fn mlp_init(d: usize, h: usize, rng: &mut ChaCha8Rng) -> Vec<f64> {
    let u1 = Uniform::new_inclusive(-1.0 / (d as f64).sqrt(), 1.0 / (d as f64).sqrt()).expect("valid range");
    let u2 = Uniform::new_inclusive(-1.0 / (h as f64).sqrt(), 1.0 / (h as f64).sqrt()).expect("valid range");
    let mut p = Vec::with_capacity(mlp_param_count(d, h));
    p.extend((0..h * d + h).map(|_| u1.sample(rng)));
    p.extend((0..h + 1).map(|_| u2.sample(rng)));
    p
}

/// Full-batch ADAM on the one-step loss. Returns `None` on divergence.
fn train_one(d: usize, h: usize, mut p: Vec<f64>, x: &DMatrix<f64>, y: &[f64], opts: &MlpNarxOptions) -> Option<(Vec<f64>, f64)> {
    let mut grad = vec![0.0; p.len()];
    let mut adam = AdamState::new(p.len(), opts.lr);
    for _ in 0..opts.iterations {
        let l = mlp_loss(d, h, &p, x, y, Some(&mut grad));
        if !l.is_finite() || adam.step(&mut p, &grad).is_err() {
            return None;
        }
    }
    let l = mlp_loss(d, h, &p, x, y, None);
    l.is_finite().then_some((p, l))
}

/// Trains every (hidden size, restart) pair and keeps the network with the
/// lowest validation free-run RMSE.
pub fn fit_mlp_narx(data: &FitData, lags: LagStructure, opts: &MlpNarxOptions) -> Result<(MlpNarxModel, Vec<MlpRun>)> {
    if opts.hidden_sizes.iter().any(|&h| h == 0) || opts.hidden_sizes.is_empty() {
        return Err(Error::invalid("hidden sizes must be non-empty and positive"));
    }
    let normalizer = Normalizer::fit(&data.train, NormalizerMode::Zscore)?;
    let tr = normalizer.apply(&data.train);
    let (x, y) = build_hankel(&tr.u, &tr.y, lags)?;
    let y: Vec<f64> = y.iter().copied().collect();
    let d = lags.width();

    let jobs: Vec<(usize, usize)> =
        opts.hidden_sizes.iter().flat_map(|&h| (0..opts.restarts.max(1)).map(move |r| (h, r))).collect();
    let results: Vec<(MlpRun, Option<MlpNarxModel>)> = jobs
        .par_iter()
        .map(|&(h, r)| {
            let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(opts.seed, &[h as u64, r as u64]));
            let p0 = mlp_init(d, h, &mut rng);
            match train_one(d, h, p0, &x, &y, opts) {
                Some((p, train_mse)) => {
                    let model = MlpNarxModel::from_params(lags, h, &p, normalizer.clone()).expect("shape by construction");
                    let val_rmse = free_run_rmse(&model, &data.validation);
                    (MlpRun { hidden_size: h, restart: r, train_mse, val_rmse }, Some(model))
                }
                None => {
                    log::warn!("MLP-NARX hidden={h} restart={r} diverged");
                    (MlpRun { hidden_size: h, restart: r, train_mse: f64::INFINITY, val_rmse: f64::INFINITY }, None)
                }
            }
        })
        .collect();

    let mut best: Option<(f64, MlpNarxModel)> = None;
    let mut runs = Vec::with_capacity(results.len());
    for (run, model) in results {
        if let Some(m) = model {
            if run.val_rmse.is_finite() && best.as_ref().map_or(true, |(b, _)| run.val_rmse < *b) {
                best = Some((run.val_rmse, m));
            }
        }
        runs.push(run);
    }
    let (_, model) = best.ok_or_else(|| Error::Training("every MLP-NARX run diverged".into()))?;
    Ok((model, runs))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernels::{finite_diff_grad, relative_gradient_error};
    use rand::Rng;

    #[test]
    fn gradient_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for &(d, h) in &[(1, 1), (3, 2), (4, 5)] {
            let x = DMatrix::from_fn(25, d, |_, _| rng.random_range(-1.5..1.5));
            let y: Vec<f64> = (0..25).map(|_| rng.random_range(-1.0..1.0)).collect();
            let p: Vec<f64> = (0..mlp_param_count(d, h)).map(|_| rng.random_range(-1.0..1.0)).collect();
            let mut g = vec![0.0; p.len()];
            mlp_loss(d, h, &p, &x, &y, Some(&mut g));
            let fd = finite_diff_grad(|q| mlp_loss(d, h, q, &x, &y, None), &p).unwrap();
            assert!(relative_gradient_error(&g, &fd) < 1e-5, "d={d} h={h}");
        }
    }

    #[test]
    fn zero_network_outputs_zero() {
        let lags = LagStructure { n_y: 1, n_u: 2 };
        let m = MlpNarxModel::from_params(lags, 3, &vec![0.0; mlp_param_count(3, 3)], Normalizer::identity()).unwrap();
        assert_eq!(m.predict_row(&[0.0, 0.0, 0.0]), 0.0);
    }

    #[test]
    fn predict_row_matches_loss_forward() {
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let lags = LagStructure { n_y: 2, n_u: 1 };
        let p = mlp_init(3, 4, &mut rng);
        let m = MlpNarxModel::from_params(lags, 4, &p, Normalizer::identity()).unwrap();
        let row = [0.3, -0.2, 0.9];
        assert_eq!(m.predict_row(&row), forward(3, 4, &p, &row));
        assert_eq!(m.to_params(), p);
    }
}
