//! Minibatch BPTT over overlapping subsequences, seeded restarts and
//! selection by validation free-run RMSE.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Uniform};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::cell::{sequence_sse, CellKind, CellShape};
use super::model::{rnn_free_run_rmse, RecurrentModel};
use crate::data::{FitData, Normalizer, NormalizerMode};
use crate::error::{Error, Result};
use crate::kernels::{derive_seed, AdamState};

/// Usable-sample threshold below which the longer epoch budget applies.
pub const EPOCH_THRESHOLD: usize = 10_000;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BpttOptions {
    pub seq_len: usize,
    pub stride: usize,
    pub washout: usize,
    pub batch_size: usize,
    /// Fixed epoch count; `None` applies [`default_epochs`].
    pub epochs: Option<usize>,
    pub lr: f64,
    pub restarts: usize,
    pub n_u_grid: Vec<usize>,
    pub n_h_grid: Vec<usize>,
    pub seed: u64,
}

impl Default for BpttOptions {
    fn default() -> Self {
        BpttOptions {
            seq_len: 128,
            stride: 64,
            washout: 16,
            batch_size: 32,
            epochs: None,
            lr: 1e-3,
            restarts: 10,
            n_u_grid: vec![1, 5, 10, 20],
            n_h_grid: vec![4, 8, 16, 32],
            seed: 0,
        }
    }
}

pub fn default_epochs(usable_samples: usize) -> usize {
    if usable_samples < EPOCH_THRESHOLD {
        20_000
    } else {
        10_000
    }
}

/// `(start, len)` windows over a record of `n` samples for look-back `n_u`.
/// Windows of `seq_len` advance by `stride` from `n_u − 1`; a final window
/// is aligned to the record end when the stride leaves a tail uncovered.
pub fn subsequences(n: usize, n_u: usize, seq_len: usize, stride: usize, washout: usize) -> Result<Vec<(usize, usize)>> {
    if seq_len == 0 || stride == 0 {
        return Err(Error::invalid("subsequence length and stride must be positive"));
    }
    let first = n_u.saturating_sub(1);
    let usable = n.saturating_sub(first);
    if usable <= washout {
        return Err(Error::SegmentTooShort(format!(
            "{usable} usable samples cannot cover a washout of {washout}"
        )));
    }
    if usable < seq_len {
        return Ok(vec![(first, usable)]);
    }
    let mut out = Vec::new();
    let mut s = first;
    while s + seq_len <= n {
        out.push((s, seq_len));
        s += stride;
    }
    let last = out.last().map_or(0, |&(s, l)| s + l);
    if last < n {
        out.push((n - seq_len, seq_len));
    }
    Ok(out)
}

/// Uniform `±1/√fan_in` per layer; lstm/olstm forget-gate biases start at 1.
pub fn init_params(shape: &CellShape, rng: &mut ChaCha8Rng) -> Vec<f64> {
    let mut p = vec![0.0; shape.param_count()];
    let fan_in = shape.n_u + if shape.kind.is_recurrent() { shape.n_h } else { 0 };
    let lim = 1.0 / (fan_in as f64).sqrt();
    let gate = Uniform::new_inclusive(-lim, lim).expect("valid range");
    let ro = shape.readout_offset();
    for v in &mut p[..ro] {
        *v = gate.sample(rng);
    }
    let lim_o = 1.0 / (shape.n_h as f64).sqrt();
    let out = Uniform::new_inclusive(-lim_o, lim_o).expect("valid range");
    for v in &mut p[ro..] {
        *v = out.sample(rng);
    }
    if matches!(shape.kind, CellKind::Lstm | CellKind::Olstm) {
        let f = shape.gate(1);
        for i in 0..shape.n_h {
            p[f.b + i] = 1.0;
        }
    }
    p
}

/// Mean squared error over a set of windows and its gradient.
pub fn batch_loss(
    shape: &CellShape,
    p: &[f64],
    u: &[f64],
    y: &[f64],
    windows: &[(usize, usize)],
    washout: usize,
    grad: Option<&mut [f64]>,
) -> f64 {
    let mut sse = 0.0;
    let mut count = 0;
    match grad {
        Some(g) => {
            g.iter_mut().for_each(|v| *v = 0.0);
            for &(s, l) in windows {
                let (e, c) = sequence_sse(shape, p, u, y, s, l, washout, Some(g));
                sse += e;
                count += c;
            }
            let inv = 1.0 / count.max(1) as f64;
            g.iter_mut().for_each(|v| *v *= inv);
        }
        None => {
            for &(s, l) in windows {
                let (e, c) = sequence_sse(shape, p, u, y, s, l, washout, None);
                sse += e;
                count += c;
            }
        }
    }
    sse / count.max(1) as f64
}

/// One training run from seeded initial weights on normalised signals.
pub fn train_run(shape: &CellShape, u: &[f64], y: &[f64], opts: &BpttOptions, seed: u64) -> Result<(Vec<f64>, f64)> {
    let mut windows = subsequences(u.len(), shape.n_u, opts.seq_len, opts.stride, opts.washout)?;
    let usable = u.len() - (shape.n_u - 1);
    let epochs = opts.epochs.unwrap_or_else(|| default_epochs(usable));
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut p = init_params(shape, &mut rng);
    let mut grad = vec![0.0; p.len()];
    let mut adam = AdamState::new(p.len(), opts.lr);
    let bs = opts.batch_size.max(1);
    let mut last = f64::NAN;
    for epoch in 0..epochs {
        windows.shuffle(&mut rng);
        for batch in windows.chunks(bs) {
            let l = batch_loss(shape, &p, u, y, batch, opts.washout, Some(&mut grad));
            if !l.is_finite() || adam.step(&mut p, &grad).is_err() {
                return Err(Error::Training(format!("{} diverged in epoch {epoch}", shape.kind)));
            }
            last = l;
        }
    }
    if epochs == 0 {
        last = batch_loss(shape, &p, u, y, &windows, opts.washout, None);
    }
    Ok((p, last))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RecurrentRun {
    pub n_u: usize,
    pub n_h: usize,
    pub restart: usize,
    pub train_loss: f64,
    pub val_rmse: f64,
}

/// Trains every `(n_u, n_h, restart)` combination and returns the model with
/// the best full-record validation free-run RMSE, plus every run's scores.
pub fn bptt_train(data: &FitData, kind: CellKind, opts: &BpttOptions) -> Result<(RecurrentModel, Vec<RecurrentRun>)> {
    if opts.n_u_grid.is_empty() || opts.n_h_grid.is_empty() {
        return Err(Error::invalid("empty recurrent search space"));
    }
    let normalizer = Normalizer::fit(&data.train, NormalizerMode::Zscore)?;
    let tr = normalizer.apply(&data.train);
    let mut jobs = Vec::new();
    for &n_u in &opts.n_u_grid {
        for &n_h in &opts.n_h_grid {
            let shape = CellShape::new(kind, n_u, n_h)?;
            for r in 0..opts.restarts.max(1) {
                jobs.push((shape, r));
            }
        }
    }
    let kind_tag = CellKind::ALL.iter().position(|k| *k == kind).unwrap_or(0) as u64;
    let results: Vec<(RecurrentRun, Option<RecurrentModel>)> = jobs
        .par_iter()
        .map(|&(shape, r)| {
            let seed = derive_seed(opts.seed, &[kind_tag, shape.n_u as u64, shape.n_h as u64, r as u64]);
            let fitted = train_run(&shape, &tr.u, &tr.y, opts, seed)
                .and_then(|(p, loss)| Ok((RecurrentModel::new(shape, p, normalizer.clone())?, loss)));
            match fitted {
                Ok((model, loss)) => {
                    let val_rmse = rnn_free_run_rmse(&model, &data.validation);
                    let run = RecurrentRun { n_u: shape.n_u, n_h: shape.n_h, restart: r, train_loss: loss, val_rmse };
                    (run, Some(model))
                }
                Err(e) => {
                    log::warn!("{kind} n_u={} n_h={} restart {r}: {e}", shape.n_u, shape.n_h);
                    let run = RecurrentRun {
                        n_u: shape.n_u,
                        n_h: shape.n_h,
                        restart: r,
                        train_loss: f64::INFINITY,
                        val_rmse: f64::INFINITY,
                    };
                    (run, None)
                }
            }
        })
        .collect();

    let mut best: Option<(f64, RecurrentModel)> = None;
    let mut runs = Vec::with_capacity(results.len());
    for (run, model) in results {
        if let Some(m) = model {
            if run.val_rmse.is_finite() && best.as_ref().map_or(true, |(b, _)| run.val_rmse < *b) {
                best = Some((run.val_rmse, m));
            }
        }
        runs.push(run);
    }
    let (_, model) = best.ok_or_else(|| Error::Training(format!("every {kind} run failed")))?;
    Ok((model, runs))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn window_layout() {
        assert_eq!(subsequences(300, 3, 128, 64, 16).unwrap(), vec![(2, 128), (66, 128), (130, 128), (172, 128)]);
        assert_eq!(subsequences(100, 1, 128, 64, 16).unwrap(), vec![(0, 100)]);
        assert_eq!(subsequences(258, 3, 128, 128, 16).unwrap(), vec![(2, 128), (130, 128)]);
        assert!(subsequences(10, 1, 128, 64, 16).is_err());
    }

    #[test]
    fn epoch_rule() {
        assert_eq!(default_epochs(9_999), 20_000);
        assert_eq!(default_epochs(10_000), 10_000);
    }

    #[test]
    fn forget_bias_starts_at_one() {
        for kind in [CellKind::Lstm, CellKind::Olstm] {
            let shape = CellShape::new(kind, 2, 3).unwrap();
            let p = init_params(&shape, &mut ChaCha8Rng::seed_from_u64(1));
            let g = shape.gate(1);
            assert_eq!(&p[g.b..g.b + 3], &[1.0; 3]);
            assert!(p.iter().all(|v| v.abs() <= 1.0));
        }
    }

    #[test]
    fn fir_loss_ignores_window_order() {
        let shape = CellShape::new(CellKind::Fir, 3, 4).unwrap();
        let p = init_params(&shape, &mut ChaCha8Rng::seed_from_u64(2));
        let u: Vec<f64> = (0..200).map(|i| (i as f64 * 0.1).sin()).collect();
        let y: Vec<f64> = (0..200).map(|i| (i as f64 * 0.07).cos()).collect();
        let w = subsequences(200, 3, 40, 20, 5).unwrap();
        let mut rev = w.clone();
        rev.reverse();
        let (mut g1, mut g2) = (vec![0.0; p.len()], vec![0.0; p.len()]);
        let a = batch_loss(&shape, &p, &u, &y, &w, 5, Some(&mut g1));
        let b = batch_loss(&shape, &p, &u, &y, &rev, 5, Some(&mut g2));
        assert!((a - b).abs() < 1e-14);
        for (x, z) in g1.iter().zip(&g2) {
            assert!((x - z).abs() < 1e-14);
        }
    }
}
