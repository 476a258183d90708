use serde::{Deserialize, Serialize};

use super::cell::{cell_forward, stack_inputs, CellKind, CellShape, Scratch};
use crate::data::{Normalizer, TimeSeries};
use crate::error::{Error, Result};

pub const RNN_FORMAT_VERSION: u32 = 1;

/// A fitted input-driven simulator. `fir` models keep their MLP width in
/// `shape.n_h`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RecurrentModel {
    pub format_version: u32,
    #[serde(flatten)]
    pub shape: CellShape,
    pub params: Vec<f64>,
    pub normalizer: Normalizer,
}

impl RecurrentModel {
    pub fn new(shape: CellShape, params: Vec<f64>, normalizer: Normalizer) -> Result<Self> {
        let m = RecurrentModel { format_version: RNN_FORMAT_VERSION, shape, params, normalizer };
        m.check()?;
        Ok(m)
    }

    pub fn check(&self) -> Result<()> {
        if self.format_version != RNN_FORMAT_VERSION {
            return Err(Error::Serde(format!("unsupported recurrent model format {}", self.format_version)));
        }
        CellShape::new(self.shape.kind, self.shape.n_u, self.shape.n_h)?;
        if self.params.len() != self.shape.param_count() {
            return Err(Error::Dimension(format!(
                "{} parameters, {} with n_u={} n_h={} needs {}",
                self.params.len(),
                self.shape.kind,
                self.shape.n_u,
                self.shape.n_h,
                self.shape.param_count()
            )));
        }
        if let Some(i) = self.params.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite { index: i, context: "recurrent parameters".into() });
        }
        Ok(())
    }

    pub fn kind(&self) -> CellKind {
        self.shape.kind
    }
}

/// Free-run simulation from a zero state, physical units. Samples before
/// index `n_u − 1` are the output mean.
pub fn simulate_rnn(model: &RecurrentModel, u: &[f64]) -> Result<Vec<f64>> {
    let shape = model.shape;
    if u.len() < shape.n_u {
        return Err(Error::SegmentTooShort(format!("input of length {} shorter than look-back {}", u.len(), shape.n_u)));
    }
    let norm = &model.normalizer;
    let un: Vec<f64> = u.iter().map(|&v| norm.u_to_norm(v)).collect();
    let sl = shape.state_len();
    let mut state = vec![0.0; sl];
    let mut next = vec![0.0; sl];
    let mut cache = vec![0.0; shape.cache_len()];
    let mut x = vec![0.0; shape.n_u];
    let mut s = Scratch::new(&shape);
    let mut out = vec![norm.y_mean; shape.n_u - 1];
    out.reserve(u.len());
    for t in shape.n_u - 1..u.len() {
        stack_inputs(&un, t, &mut x);
        let y = cell_forward(&shape, &model.params, &x, &state, &mut next, &mut cache, &mut s);
        let phys = norm.y_from_norm(y);
        if !phys.is_finite() || next.iter().any(|v| !v.is_finite()) {
            return Err(Error::SimulationBlowUp { index: t });
        }
        out.push(phys);
        std::mem::swap(&mut state, &mut next);
    }
    Ok(out)
}

/// Free-run RMSE over a whole record, `∞` on blow-up.
pub fn rnn_free_run_rmse(model: &RecurrentModel, ts: &TimeSeries) -> f64 {
    match simulate_rnn(model, &ts.u) {
        Ok(yhat) => {
            (yhat.iter().zip(&ts.y).map(|(a, b)| (a - b) * (a - b)).sum::<f64>() / ts.len() as f64).sqrt()
        }
        Err(_) => f64::INFINITY,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::NormalizerMode;

    #[test]
    fn zero_model_emits_readout_bias() {
        let shape = CellShape::new(CellKind::Gru, 3, 4).unwrap();
        let mut p = vec![0.0; shape.param_count()];
        *p.last_mut().unwrap() = 0.5;
        let ts = TimeSeries::new("t", vec![1.0, 2.0, 4.0, 3.0, 0.0], vec![0.0, 2.0, 2.0, 4.0, 2.0], 1.0).unwrap();
        let norm = Normalizer::fit(&ts, NormalizerMode::Zscore).unwrap();
        let m = RecurrentModel::new(shape, p, norm.clone()).unwrap();
        let y = simulate_rnn(&m, &ts.u).unwrap();
        assert_eq!(&y[..2], &[norm.y_mean, norm.y_mean]);
        for v in &y[2..] {
            assert!((v - norm.y_from_norm(0.5)).abs() < 1e-15);
        }
    }

    #[test]
    fn fir_identity_map() {
        // y = w_o·tanh(a·u_t) + 0 with a small so the map is linear to 1e-9,
        // scaled back by w_o = 1/a.
        let shape = CellShape::new(CellKind::Fir, 2, 1).unwrap();
        let a = 1e-4;
        let p = vec![a, 0.0, 0.0, 1.0 / a, 0.0];
        let m = RecurrentModel::new(shape, p, Normalizer::identity()).unwrap();
        let u = [0.3, -0.7, 1.1, 0.2];
        let y = simulate_rnn(&m, &u).unwrap();
        for t in 1..4 {
            assert!((y[t] - u[t]).abs() < 1e-8);
        }
    }

    #[test]
    fn shape_mismatch_rejected() {
        let shape = CellShape::new(CellKind::Rnn, 1, 2).unwrap();
        assert!(RecurrentModel::new(shape, vec![0.0; 3], Normalizer::identity()).is_err());
    }

    #[test]
    fn record_round_trip() {
        let shape = CellShape::new(CellKind::Olstm, 2, 2).unwrap();
        let p: Vec<f64> = (0..shape.param_count()).map(|i| (i as f64 * 0.37).sin() / 3.0).collect();
        let m = RecurrentModel::new(shape, p, Normalizer::identity()).unwrap();
        let back: RecurrentModel = serde_json::from_str(&serde_json::to_string(&m).unwrap()).unwrap();
        assert_eq!(back, m);
    }
}
