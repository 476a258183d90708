use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Optimizer state for bias-corrected ADAM.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdamState {
    pub m: Vec<f64>,
    pub v: Vec<f64>,
    pub t: u64,
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl AdamState {
    pub fn new(n_params: usize, lr: f64) -> Self {
        AdamState {
            m: vec![0.0; n_params],
            v: vec![0.0; n_params],
            t: 0,
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }

    /// In-place update used by the training loops.
    pub fn step(&mut self, params: &mut [f64], grads: &[f64]) -> Result<()> {
        if params.len() != self.m.len() || grads.len() != self.m.len() {
            return Err(Error::Dimension(format!(
                "adam state {} vs params {} vs grads {}",
                self.m.len(),
                params.len(),
                grads.len()
            )));
        }
        if let Some(i) = grads.iter().position(|g| !g.is_finite()) {
            return Err(Error::NonFinite { index: i, context: "gradient".into() });
        }
        self.t += 1;
        let bc1 = 1.0 - self.beta1.powf(self.t as f64);
        let bc2 = 1.0 - self.beta2.powf(self.t as f64);
        for i in 0..params.len() {
            let g = grads[i];
            self.m[i] = self.beta1 * self.m[i] + (1.0 - self.beta1) * g;
            self.v[i] = self.beta2 * self.v[i] + (1.0 - self.beta2) * g * g;
            let m_hat = self.m[i] / bc1;
            let v_hat = self.v[i] / bc2;
            params[i] -= self.lr * m_hat / (v_hat.sqrt() + self.eps);
        }
        Ok(())
    }
}

/// Pure form of one ADAM update: returns the new parameters and state.
pub fn adam_step(state: &AdamState, params: &[f64], grads: &[f64]) -> Result<(Vec<f64>, AdamState)> {
    let mut next = state.clone();
    let mut p = params.to_vec();
    next.step(&mut p, grads)?;
    Ok((p, next))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn first_step_moves_by_lr() {
        let s = AdamState::new(1, 0.1);
        let (p, s2) = adam_step(&s, &[0.0], &[1.0]).unwrap();
        assert!((p[0] + 0.1 / (1.0 + 1e-8)).abs() < 1e-15);
        assert_eq!(s2.t, 1);

        let s = AdamState::new(1, 0.01);
        let (p, _) = adam_step(&s, &[0.0], &[-2.0]).unwrap();
        assert!((p[0] - 0.01).abs() < 1e-9);
    }

    #[test]
    fn zero_gradient_is_a_no_op() {
        let s = AdamState::new(3, 0.1);
        let (p, s2) = adam_step(&s, &[1.0, 2.0, 3.0], &[0.0; 3]).unwrap();
        assert_eq!(p, vec![1.0, 2.0, 3.0]);
        assert_eq!(s2.t, 1);
        assert!(s2.v.iter().all(|v| *v >= 0.0));
    }

    #[test]
    fn rejects_non_finite_gradient() {
        let s = AdamState::new(2, 0.1);
        match adam_step(&s, &[0.0, 0.0], &[0.0, f64::INFINITY]) {
            Err(Error::NonFinite { index, .. }) => assert_eq!(index, 1),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn quadratic_descends_after_warmup() {
        for lr in [0.1, 0.05, 0.01] {
            let mut s = AdamState::new(1, lr);
            let mut x = vec![3.0];
            let mut prev = f64::INFINITY;
            for step in 0..200 {
                let g = vec![2.0 * x[0]];
                s.step(&mut x, &g).unwrap();
                let f = x[0] * x[0];
                if step >= 10 && x[0] > 0.5 {
                    assert!(f <= prev, "lr {lr} step {step}");
                }
                prev = f;
            }
        }
    }
}
