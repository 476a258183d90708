use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kernels::spectral_radius;

pub const SS_FORMAT_VERSION: u32 = 1;

/// SISO discrete-time state-space model acting on mean-removed signals.
///
/// `x_{t+1} = A x_t + B (u_t - ū)`, `ŷ_t = C x_t + D (u_t - ū) + ȳ`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(into = "StateSpaceRecord", try_from = "StateSpaceRecord")]
pub struct StateSpaceModel {
    pub a: DMatrix<f64>,
    pub b: DVector<f64>,
    pub c: DVector<f64>,
    pub d: f64,
    pub u_mean: f64,
    pub y_mean: f64,
}

impl StateSpaceModel {
    pub fn new(a: DMatrix<f64>, b: DVector<f64>, c: DVector<f64>, d: f64) -> Result<Self> {
        let m = StateSpaceModel { a, b, c, d, u_mean: 0.0, y_mean: 0.0 };
        m.check()?;
        Ok(m)
    }

    pub fn with_means(mut self, u_mean: f64, y_mean: f64) -> Self {
        self.u_mean = u_mean;
        self.y_mean = y_mean;
        self
    }

    pub fn order(&self) -> usize {
        self.a.nrows()
    }

    fn check(&self) -> Result<()> {
        let n = self.a.nrows();
        if self.a.ncols() != n || self.b.len() != n || self.c.len() != n {
            return Err(Error::Dimension(format!(
                "A {:?}, B {}, C {} are inconsistent",
                self.a.shape(),
                self.b.len(),
                self.c.len()
            )));
        }
        let all = self.a.iter().chain(self.b.iter()).chain(self.c.iter());
        if let Some(i) = all.clone().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite { index: i, context: "state-space matrices".into() });
        }
        if !self.d.is_finite() || !self.u_mean.is_finite() || !self.y_mean.is_finite() {
            return Err(Error::NonFinite { index: 0, context: "feedthrough or means".into() });
        }
        Ok(())
    }

    pub fn spectral_radius(&self) -> f64 {
        spectral_radius(&self.a)
    }

    pub fn is_stable(&self) -> bool {
        self.spectral_radius() < 1.0
    }

    /// Markov parameters `h_0 = D`, `h_k = C A^{k-1} B`.
    pub fn markov_parameters(&self, count: usize) -> Vec<f64> {
        let mut out = Vec::with_capacity(count);
        if count == 0 {
            return out;
        }
        out.push(self.d);
        let mut x = self.b.clone();
        for _ in 1..count {
            out.push(self.c.dot(&x));
            x = &self.a * x;
        }
        out
    }

    /// Applies the similarity transform `x = T z`.
    pub fn transformed(&self, t: &DMatrix<f64>) -> Result<Self> {
        let t_inv = t
            .clone()
            .try_inverse()
            .ok_or_else(|| Error::invalid("similarity transform is singular"))?;
        Ok(StateSpaceModel {
            a: &t_inv * &self.a * t,
            b: &t_inv * &self.b,
            c: t.transpose() * &self.c,
            d: self.d,
            u_mean: self.u_mean,
            y_mean: self.y_mean,
        })
    }

    /// Parameter vector `[vec_row(A), B, C, D]`.
    pub fn to_params(&self) -> Vec<f64> {
        let n = self.order();
        let mut p = Vec::with_capacity(n * n + 2 * n + 1);
        for i in 0..n {
            for j in 0..n {
                p.push(self.a[(i, j)]);
            }
        }
        p.extend(self.b.iter());
        p.extend(self.c.iter());
        p.push(self.d);
        p
    }

    pub fn from_params(n: usize, p: &[f64], u_mean: f64, y_mean: f64) -> Self {
        debug_assert_eq!(p.len(), n * n + 2 * n + 1);
        StateSpaceModel {
            a: DMatrix::from_row_slice(n, n, &p[..n * n]),
            b: DVector::from_column_slice(&p[n * n..n * n + n]),
            c: DVector::from_column_slice(&p[n * n + n..n * n + 2 * n]),
            d: p[n * n + 2 * n],
            u_mean,
            y_mean,
        }
    }
}

/// Free-run simulation. `x0` defaults to the zero state.
pub fn simulate_ss(model: &StateSpaceModel, u: &[f64], x0: Option<&DVector<f64>>) -> Result<Vec<f64>> {
    let n = model.order();
    let mut x: Vec<f64> = match x0 {
        Some(v) if v.len() != n => {
            return Err(Error::Dimension(format!("initial state has length {}, model order {n}", v.len())))
        }
        Some(v) => v.iter().copied().collect(),
        None => vec![0.0; n],
    };
    let mut next = vec![0.0; n];
    let mut out = Vec::with_capacity(u.len());
    for (t, &ut) in u.iter().enumerate() {
        let du = ut - model.u_mean;
        let y = model.c.iter().zip(&x).map(|(c, x)| c * x).sum::<f64>() + model.d * du + model.y_mean;
        if !y.is_finite() {
            return Err(Error::SimulationBlowUp { index: t });
        }
        out.push(y);
        for i in 0..n {
            let mut s = model.b[i] * du;
            for j in 0..n {
                s += model.a[(i, j)] * x[j];
            }
            next[i] = s;
        }
        std::mem::swap(&mut x, &mut next);
    }
    Ok(out)
}

/// Self-describing persisted form with explicit dimensions.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct StateSpaceRecord {
    pub format_version: u32,
    pub n_x: usize,
    /// Row-major `n_x × n_x`.
    pub a: Vec<f64>,
    pub b: Vec<f64>,
    pub c: Vec<f64>,
    pub d: f64,
    pub u_mean: f64,
    pub y_mean: f64,
}

impl From<StateSpaceModel> for StateSpaceRecord {
    fn from(m: StateSpaceModel) -> Self {
        let n = m.order();
        let p = m.to_params();
        StateSpaceRecord {
            format_version: SS_FORMAT_VERSION,
            n_x: n,
            a: p[..n * n].to_vec(),
            b: m.b.iter().copied().collect(),
            c: m.c.iter().copied().collect(),
            d: m.d,
            u_mean: m.u_mean,
            y_mean: m.y_mean,
        }
    }
}

impl TryFrom<StateSpaceRecord> for StateSpaceModel {
    type Error = Error;
    fn try_from(r: StateSpaceRecord) -> Result<Self> {
        if r.format_version != SS_FORMAT_VERSION {
            return Err(Error::Serde(format!("state-space format version {} unsupported", r.format_version)));
        }
        let n = r.n_x;
        if r.a.len() != n * n || r.b.len() != n || r.c.len() != n {
            return Err(Error::Dimension("state-space record dimensions disagree with n_x".into()));
        }
        let m = StateSpaceModel {
            a: DMatrix::from_row_slice(n, n, &r.a),
            b: DVector::from_vec(r.b),
            c: DVector::from_vec(r.c),
            d: r.d,
            u_mean: r.u_mean,
            y_mean: r.y_mean,
        };
        m.check()?;
        Ok(m)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn scalar(a: f64, b: f64, c: f64, d: f64) -> StateSpaceModel {
        StateSpaceModel::new(
            DMatrix::from_element(1, 1, a),
            DVector::from_element(1, b),
            DVector::from_element(1, c),
            d,
        )
        .unwrap()
    }

    fn random_model(rng: &mut ChaCha8Rng, n: usize) -> StateSpaceModel {
        let a = DMatrix::from_fn(n, n, |_, _| rng.random_range(-0.4..0.4));
        let b = DVector::from_fn(n, |_, _| rng.random_range(-1.0..1.0));
        let c = DVector::from_fn(n, |_, _| rng.random_range(-1.0..1.0));
        StateSpaceModel::new(a, b, c, rng.random_range(-1.0..1.0)).unwrap()
    }

    #[test]
    fn scalar_impulse() {
        let m = scalar(0.5, 1.0, 1.0, 0.0);
        let y = simulate_ss(&m, &[1.0, 0.0, 0.0, 0.0], None).unwrap();
        assert_eq!(y, vec![0.0, 1.0, 0.5, 0.25]);
    }

    #[test]
    fn pure_feedthrough() {
        let m = scalar(0.0, 0.0, 0.0, 1.0);
        let u = vec![0.3, -1.0, 2.0];
        assert_eq!(simulate_ss(&m, &u, None).unwrap(), u);
    }

    #[test]
    fn means_are_removed_and_restored() {
        let m = scalar(0.5, 1.0, 1.0, 0.0).with_means(2.0, 10.0);
        let y = simulate_ss(&m, &[3.0, 2.0, 2.0], None).unwrap();
        assert_eq!(y, vec![10.0, 11.0, 10.5]);
    }

    #[test]
    fn blow_up_reports_index() {
        let m = scalar(1e200, 1.0, 1.0, 0.0);
        match simulate_ss(&m, &[1.0, 0.0, 0.0, 0.0, 0.0], None) {
            Err(Error::SimulationBlowUp { index }) => assert!(index >= 2),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn linearity_and_homogeneity() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let m = random_model(&mut rng, 3);
        let u1: Vec<f64> = (0..200).map(|_| rng.random_range(-1.0..1.0)).collect();
        let u2: Vec<f64> = (0..200).map(|_| rng.random_range(-1.0..1.0)).collect();
        let sum: Vec<f64> = u1.iter().zip(&u2).map(|(a, b)| a + b).collect();
        let scaled: Vec<f64> = u1.iter().map(|a| 2.5 * a).collect();
        let y1 = simulate_ss(&m, &u1, None).unwrap();
        let y2 = simulate_ss(&m, &u2, None).unwrap();
        let ys = simulate_ss(&m, &sum, None).unwrap();
        let yk = simulate_ss(&m, &scaled, None).unwrap();
        for t in 0..200 {
            assert!((ys[t] - y1[t] - y2[t]).abs() < 1e-12);
            assert!((yk[t] - 2.5 * y1[t]).abs() < 1e-12);
        }
    }

    #[test]
    fn similarity_invariance() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for _ in 0..10 {
            let m = random_model(&mut rng, 4);
            let t = DMatrix::from_fn(4, 4, |i, j| rng.random_range(-1.0..1.0) + if i == j { 2.0 } else { 0.0 });
            let mt = m.transformed(&t).unwrap();
            let u: Vec<f64> = (0..300).map(|_| rng.random_range(-1.0..1.0)).collect();
            let a = simulate_ss(&m, &u, None).unwrap();
            let b = simulate_ss(&mt, &u, None).unwrap();
            for (x, y) in a.iter().zip(&b) {
                assert!((x - y).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn record_round_trip_is_exact() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let m = random_model(&mut rng, 3).with_means(0.1234567890123, -7.0 / 3.0);
        let json = serde_json::to_string(&m).unwrap();
        assert!(json.contains("\"format_version\":1"));
        let back: StateSpaceModel = serde_json::from_str(&json).unwrap();
        assert_eq!(back, m);
    }

    #[test]
    fn inconsistent_dimensions() {
        assert!(StateSpaceModel::new(DMatrix::zeros(2, 2), DVector::zeros(1), DVector::zeros(2), 0.0).is_err());
        let m = scalar(0.1, 1.0, 1.0, 0.0);
        assert!(simulate_ss(&m, &[1.0], Some(&DVector::zeros(2))).is_err());
    }
}
