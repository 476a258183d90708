//! Desk-scale oracle systems with known structure.

use nalgebra::DMatrix;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, Uniform};
use serde::{Deserialize, Serialize};

use super::TimeSeries;
use crate::error::{Error, Result};
use crate::kernels::spectral_radius;

/// Integration substeps per sample for the continuous-time systems.
pub const RK4_SUBSTEPS: usize = 10;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum SyntheticKind {
    /// `y_t = Σ a_i y_{t-i} + Σ b_j u_{t-j}` with `a[0]` the lag-1 output
    /// coefficient and `b[0]` the coefficient of the current input.
    KnownArx { a: Vec<f64>, b: Vec<f64> },
    /// Poles at `radius·e^{±i·angle}`, driven through `gain·u_{t-1}`.
    LinearSecondOrder { radius: f64, angle: f64, gain: f64 },
    /// `m ẍ + c ẋ + k x + k₃ x³ = gain·u`, output `x`.
    DuffingRk4 { mass: f64, damping: f64, stiffness: f64, cubic: f64, gain: f64 },
    /// Two gravity-drained tanks in series with overflow at `level_max`.
    CascadedTanksOde {
        k1: f64,
        k2: f64,
        k3: f64,
        k4: f64,
        level_max: f64,
        initial_levels: [f64; 2],
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticSystemSpec {
    #[serde(flatten)]
    pub kind: SyntheticKind,
    pub noise_std: f64,
    pub seed: u64,
    #[serde(default)]
    pub allow_unstable: bool,
    #[serde(default)]
    pub noise_placement: NoisePlacement,
}

/// Where the Gaussian noise enters.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NoisePlacement {
    /// Added to the measured output only.
    #[default]
    Output,
    /// Driven through the difference equation (linear kinds only).
    Equation,
}

impl SyntheticSystemSpec {
    pub fn new(kind: SyntheticKind, noise_std: f64, seed: u64) -> Self {
        SyntheticSystemSpec { kind, noise_std, seed, allow_unstable: false, noise_placement: NoisePlacement::Output }
    }
}

fn arx_spectral_radius(a: &[f64]) -> f64 {
    let n = a.len();
    if n == 0 {
        return 0.0;
    }
    let mut c = DMatrix::<f64>::zeros(n, n);
    for (j, v) in a.iter().enumerate() {
        c[(0, j)] = *v;
    }
    for i in 1..n {
        c[(i, i - 1)] = 1.0;
    }
    spectral_radius(&c)
}

fn arx_recursion(a: &[f64], b: &[f64], u: &[f64], e: Option<&[f64]>) -> Vec<f64> {
    let mut y = vec![0.0; u.len()];
    for t in 0..u.len() {
        let mut acc = e.map_or(0.0, |e| e[t]);
        for (i, ai) in a.iter().enumerate() {
            if t > i {
                acc += ai * y[t - 1 - i];
            }
        }
        for (j, bj) in b.iter().enumerate() {
            if t >= j {
                acc += bj * u[t - j];
            }
        }
        y[t] = acc;
    }
    y
}

fn rk4<const N: usize>(x: &mut [f64; N], dt: f64, f: impl Fn(&[f64; N]) -> [f64; N]) {
    let add = |a: &[f64; N], k: &[f64; N], s: f64| {
        let mut o = *a;
        for i in 0..N {
            o[i] += s * k[i];
        }
        o
    };
    let k1 = f(x);
    let k2 = f(&add(x, &k1, dt / 2.0));
    let k3 = f(&add(x, &k2, dt / 2.0));
    let k4 = f(&add(x, &k3, dt));
    for i in 0..N {
        x[i] += dt / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
    }
}

/// Simulates the oracle system on `input` (held constant between samples)
/// and adds seeded Gaussian noise at the configured placement.
pub fn generate_synthetic(spec: &SyntheticSystemSpec, input: &[f64], sample_time: f64) -> Result<TimeSeries> {
    if input.is_empty() {
        return Err(Error::EmptySeries);
    }
    if !(sample_time > 0.0) {
        return Err(Error::invalid("sample time must be positive"));
    }
    if !(spec.noise_std >= 0.0) {
        return Err(Error::invalid("noise std must be non-negative"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let normal = Normal::new(0.0, spec.noise_std).map_err(|e| Error::invalid(e.to_string()))?;
    let equation = spec.noise_placement == NoisePlacement::Equation && spec.noise_std > 0.0;
    let e: Option<Vec<f64>> = equation.then(|| (0..input.len()).map(|_| normal.sample(&mut rng)).collect());
    if equation && !matches!(spec.kind, SyntheticKind::KnownArx { .. } | SyntheticKind::LinearSecondOrder { .. }) {
        return Err(Error::invalid("equation noise is only defined for linear difference equations"));
    }
    let clean = match &spec.kind {
        SyntheticKind::KnownArx { a, b } => {
            let rho = arx_spectral_radius(a);
            if rho >= 1.0 && !spec.allow_unstable {
                return Err(Error::Unstable(format!("known_arx pole magnitude {rho:.6} >= 1")));
            }
            arx_recursion(a, b, input, e.as_deref())
        }
        SyntheticKind::LinearSecondOrder { radius, angle, gain } => {
            if *radius >= 1.0 && !spec.allow_unstable {
                return Err(Error::Unstable(format!("pole radius {radius} >= 1")));
            }
            let a = [2.0 * radius * angle.cos(), -radius * radius];
            arx_recursion(&a, &[0.0, *gain], input, e.as_deref())
        }
        SyntheticKind::DuffingRk4 { mass, damping, stiffness, cubic, gain } => {
            if !(*mass > 0.0) {
                return Err(Error::invalid("duffing mass must be positive"));
            }
            let dt = sample_time / RK4_SUBSTEPS as f64;
            let mut x = [0.0_f64; 2];
            let mut y = Vec::with_capacity(input.len());
            for &u in input {
                y.push(x[0]);
                for _ in 0..RK4_SUBSTEPS {
                    rk4(&mut x, dt, |s| {
                        [s[1], (gain * u - damping * s[1] - stiffness * s[0] - cubic * s[0].powi(3)) / mass]
                    });
                }
            }
            y
        }
        SyntheticKind::CascadedTanksOde { k1, k2, k3, k4, level_max, initial_levels } => {
            if initial_levels.iter().any(|l| *l < 0.0) || !(*level_max > 0.0) {
                return Err(Error::invalid("tank levels must be non-negative and the overflow level positive"));
            }
            let dt = sample_time / RK4_SUBSTEPS as f64;
            let mut x = *initial_levels;
            let mut y = Vec::with_capacity(input.len());
            for &u in input {
                y.push(x[1]);
                for _ in 0..RK4_SUBSTEPS {
                    rk4(&mut x, dt, |s| {
                        let r1 = s[0].max(0.0).sqrt();
                        let r2 = s[1].max(0.0).sqrt();
                        [-k1 * r1 + k4 * u, k2 * r1 - k3 * r2]
                    });
                    for l in x.iter_mut() {
                        *l = l.clamp(0.0, *level_max);
                    }
                }
            }
            y
        }
    };
    if let Some(i) = clean.iter().position(|v| !v.is_finite()) {
        return Err(Error::SimulationBlowUp { index: i });
    }
    let y = if spec.noise_std > 0.0 && !equation {
        clean.into_iter().map(|v| v + normal.sample(&mut rng)).collect()
    } else {
        clean
    };
    TimeSeries::new("synthetic", input.to_vec(), y, sample_time)
}

/// Seeded zero-mean Gaussian white noise.
pub fn white_noise(n: usize, std: f64, seed: u64) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let d = Normal::new(0.0, std).expect("std must be finite and non-negative");
    (0..n).map(|_| d.sample(&mut rng)).collect()
}

/// Random-phase multisine with `n_lines` equal-amplitude lines spread over
/// `(0, band·Nyquist]`, scaled to the requested RMS.
pub fn random_phase_multisine(n: usize, n_lines: usize, band: f64, rms: f64, seed: u64) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let phase = Uniform::new(0.0, std::f64::consts::TAU).expect("valid range");
    let phases: Vec<f64> = (0..n_lines).map(|_| phase.sample(&mut rng)).collect();
    let mut x: Vec<f64> = (0..n)
        .map(|t| {
            phases
                .iter()
                .enumerate()
                .map(|(k, ph)| {
                    let f = band * 0.5 * (k + 1) as f64 / n_lines as f64;
                    (std::f64::consts::TAU * f * t as f64 + ph).sin()
                })
                .sum()
        })
        .collect();
    let cur = (x.iter().map(|v| v * v).sum::<f64>() / n as f64).sqrt();
    if cur > 0.0 {
        for v in x.iter_mut() {
            *v *= rms / cur;
        }
    }
    x
}
