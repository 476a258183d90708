//! Subspace initialisation: high-order ARX → impulse response → Ho–Kalman.

use nalgebra::{DMatrix, DVector};

use super::model::{simulate_ss, StateSpaceModel};
use crate::data::TimeSeries;
use crate::error::{Error, Result};
use crate::kernels::solve_least_squares_qr;

/// Relative singular-value threshold below which a Hankel direction is noise.
const RANK_TOL: f64 = 1e-10;

/// Ridge weights tried for the intermediate ARX regression, relative to the
/// mean regressor energy. Band-limited inputs leave the unregularised
/// problem nearly singular.
pub const RIDGE_LADDER: [f64; 7] = [0.0, 1e-10, 1e-9, 1e-8, 1e-7, 1e-6, 1e-5];

/// Order of the intermediate ARX model for a requested state order.
pub fn arx_order(n_x: usize) -> usize {
    20.max(5 * n_x)
}

/// Minimum training length accepted by [`subspace_init`].
pub fn min_train_len(n_x: usize) -> usize {
    10 * (2 * n_x + arx_order(n_x))
}

/// Least-squares ARX with `order` output lags and `order + 1` input taps
/// (including the instantaneous one). Returns `(a, b)`.
fn high_order_arx(u: &[f64], y: &[f64], order: usize, ridge: f64) -> Result<(Vec<f64>, Vec<f64>)> {
    let n = y.len();
    let rows = n - order;
    let cols = 2 * order + 1;
    let mut h = DMatrix::<f64>::zeros(rows + cols, cols);
    let mut target = DVector::<f64>::zeros(rows + cols);
    for (r, t) in (order..n).enumerate() {
        for i in 0..order {
            h[(r, i)] = y[t - 1 - i];
        }
        for j in 0..=order {
            h[(r, order + j)] = u[t - j];
        }
        target[r] = y[t];
    }
    let energy = h.rows(0, rows).norm_squared() / cols as f64;
    let w = (ridge * energy).sqrt();
    for k in 0..cols {
        h[(rows + k, k)] = w;
    }
    let theta = solve_least_squares_qr(&h, &target)?;
    Ok((theta.as_slice()[..order].to_vec(), theta.as_slice()[order..].to_vec()))
}

fn arx_impulse_response(a: &[f64], b: &[f64], len: usize) -> Vec<f64> {
    let mut h = vec![0.0; len];
    for t in 0..len {
        let mut s = if t < b.len() { b[t] } else { 0.0 };
        for (i, ai) in a.iter().enumerate() {
            if t > i {
                s += ai * h[t - 1 - i];
            }
        }
        h[t] = s;
    }
    h
}

/// Balanced Ho–Kalman realisation of order `n_x` from Markov parameters
/// `h[0..]`, where `h[0]` is the feedthrough and `h[k] = C A^{k-1} B`.
///
/// Returns `None` when the Hankel matrix is numerically zero (static map).
pub fn ho_kalman(h: &[f64], n_x: usize, block: usize) -> Result<Option<(DMatrix<f64>, DVector<f64>, DVector<f64>)>> {
    if h.len() < 2 * block + 1 {
        return Err(Error::invalid(format!("need {} Markov parameters, got {}", 2 * block + 1, h.len())));
    }
    let hk = DMatrix::from_fn(block, block, |i, j| h[i + j + 1]);
    let hs = DMatrix::from_fn(block, block, |i, j| h[i + j + 2]);
    let svd = hk.svd(true, true);
    let u = svd.u.as_ref().expect("left vectors requested");
    let vt = svd.v_t.as_ref().expect("right vectors requested");

    // nalgebra does not guarantee sorted singular values.
    let mut order: Vec<usize> = (0..svd.singular_values.len()).collect();
    order.sort_by(|&a, &b| svd.singular_values[b].total_cmp(&svd.singular_values[a]));
    let s: Vec<f64> = order.iter().map(|&i| svd.singular_values[i]).collect();

    let scale = h[0].abs().max(s[0]);
    if s[0] <= RANK_TOL * scale || s[0] == 0.0 {
        return Ok(None);
    }
    let rank = s.iter().take_while(|v| **v > RANK_TOL * s[0]).count();
    if rank < n_x {
        return Err(Error::RankDeficient { rank, requested: n_x });
    }

    let un = DMatrix::from_fn(block, n_x, |i, k| u[(i, order[k])]);
    let vn = DMatrix::from_fn(block, n_x, |j, k| vt[(order[k], j)]);
    let sqrt_s: Vec<f64> = s[..n_x].iter().map(|v| v.sqrt()).collect();
    let obs = DMatrix::from_fn(block, n_x, |i, k| un[(i, k)] * sqrt_s[k]);
    let ctr = DMatrix::from_fn(n_x, block, |k, j| vn[(j, k)] * sqrt_s[k]);

    let core = un.transpose() * hs * &vn;
    let a = DMatrix::from_fn(n_x, n_x, |i, j| core[(i, j)] / (sqrt_s[i] * sqrt_s[j]));
    let b = ctr.column(0).into_owned();
    let c = obs.row(0).transpose();
    Ok(Some((a, b, c)))
}

fn realise(train: &TimeSeries, n_x: usize, order: usize, ridge: f64) -> Result<StateSpaceModel> {
    let (a_arx, b_arx) = high_order_arx(&train.u, &train.y, order, ridge)?;
    let h = arx_impulse_response(&a_arx, &b_arx, 2 * order + 1);
    if let Some(i) = h.iter().position(|v| !v.is_finite()) {
        return Err(Error::NonFinite { index: i, context: "ARX impulse response".into() });
    }

    let (a, b, c) = match ho_kalman(&h, n_x, order)? {
        Some(abc) => abc,
        None => (DMatrix::zeros(n_x, n_x), DVector::zeros(n_x), DVector::zeros(n_x)),
    };
    let mut model = StateSpaceModel::new(a, b, c, 0.0)?;

    // Feedthrough: least squares on what the dynamic part leaves unexplained.
    let dynamic = simulate_ss(&model, &train.u, None)?;
    let (mut num, mut den) = (0.0, 0.0);
    for ((u, y), yd) in train.u.iter().zip(&train.y).zip(&dynamic) {
        num += u * (y - yd);
        den += u * u;
    }
    model.d = if den > 0.0 { num / den } else { 0.0 };
    Ok(model)
}

/// Initial state-space estimate from mean-removed training data. Each ridge
/// weight of [`RIDGE_LADDER`] yields a candidate; the one with the smallest
/// training simulation error is kept.
pub fn subspace_init(train: &TimeSeries, n_x: usize) -> Result<StateSpaceModel> {
    if n_x == 0 {
        return Err(Error::invalid("state order must be at least 1"));
    }
    let order = arx_order(n_x);
    if train.len() < min_train_len(n_x) {
        return Err(Error::SegmentTooShort(format!(
            "subspace init with n_x={n_x} needs {} samples, got {}",
            min_train_len(n_x),
            train.len()
        )));
    }
    let y_rms = (train.y.iter().map(|v| v * v).sum::<f64>() / train.len() as f64).sqrt();
    let mut best: Option<(f64, StateSpaceModel)> = None;
    let mut last_err = None;
    for (i, &ridge) in RIDGE_LADDER.iter().enumerate() {
        let model = match realise(train, n_x, order, ridge) {
            Ok(m) => m,
            // exact data of lower order: report it rather than regularise it away
            Err(e @ Error::RankDeficient { .. }) if i == 0 => return Err(e),
            Err(e) => {
                last_err = Some(e);
                continue;
            }
        };
        let err = match simulate_ss(&model, &train.u, None) {
            Ok(yhat) => {
                (yhat.iter().zip(&train.y).map(|(a, b)| (a - b) * (a - b)).sum::<f64>() / train.len() as f64).sqrt()
            }
            Err(_) => f64::INFINITY,
        };
        let exact = i == 0 && err <= 1e-9 * y_rms.max(f64::MIN_POSITIVE);
        if best.as_ref().map_or(true, |(e, _)| err < *e) {
            best = Some((err, model));
        }
        if exact {
            break;
        }
    }
    match best {
        Some((_, m)) => Ok(m),
        None => Err(last_err.unwrap_or_else(|| Error::Training("subspace initialisation failed".into()))),
    }
}
