//! Cell kinds, flat parameter layouts and single-step forward/backward passes.
//!
//! Every cell reads the stacked input `x_t = [u_t, u_{t-1}, …, u_{t-n_u+1}]`
//! and ends in a linear readout `y = w_o·h′ + b_o`. Parameters live in one
//! flat vector; per-gate affine maps are addressed through [`GateLayout`].
//!
//! Split layouts (`fir`, `rnn`, `gru`, `lstm`) store each gate as
//! `W (n_h×n_u) | U (n_h×n_h) | b (n_h)`, gates in order
//! `rnn: [a]`, `gru: [z, r, c]`, `lstm: [i, f, g, o]`; `fir` has no `U`.
//! The fused `olstm` layout stores one `4n_h × (n_u+n_h)` matrix whose row
//! blocks are `[i; f; g; o]` and columns `[x | h]`, followed by a `4n_h` bias.
//! The readout `w_o (n_h) | b_o` is last in every layout.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CellKind {
    Fir,
    Rnn,
    Gru,
    Lstm,
    Olstm,
}

impl CellKind {
    pub const ALL: [CellKind; 5] = [CellKind::Fir, CellKind::Rnn, CellKind::Gru, CellKind::Lstm, CellKind::Olstm];

    pub fn as_str(&self) -> &'static str {
        match self {
            CellKind::Fir => "fir",
            CellKind::Rnn => "rnn",
            CellKind::Gru => "gru",
            CellKind::Lstm => "lstm",
            CellKind::Olstm => "olstm",
        }
    }

    pub fn gate_count(&self) -> usize {
        match self {
            CellKind::Fir | CellKind::Rnn => 1,
            CellKind::Gru => 3,
            CellKind::Lstm | CellKind::Olstm => 4,
        }
    }

    pub fn is_recurrent(&self) -> bool {
        !matches!(self, CellKind::Fir)
    }
}

impl std::fmt::Display for CellKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Offsets of one gate's affine map `b + W·x + U·h` in the flat vector.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct GateLayout {
    pub w: usize,
    pub w_stride: usize,
    pub u: Option<usize>,
    pub u_stride: usize,
    pub b: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct CellShape {
    pub kind: CellKind,
    pub n_u: usize,
    pub n_h: usize,
}

impl CellShape {
    pub fn new(kind: CellKind, n_u: usize, n_h: usize) -> Result<Self> {
        if n_u == 0 || n_h == 0 {
            return Err(Error::invalid(format!("{kind} needs n_u ≥ 1 and n_h ≥ 1, got ({n_u}, {n_h})")));
        }
        Ok(CellShape { kind, n_u, n_h })
    }

    fn gate_block(&self) -> usize {
        let u = if self.kind.is_recurrent() { self.n_h * self.n_h } else { 0 };
        self.n_h * self.n_u + u + self.n_h
    }

    pub fn readout_offset(&self) -> usize {
        self.kind.gate_count() * self.gate_block()
    }

    pub fn param_count(&self) -> usize {
        self.readout_offset() + self.n_h + 1
    }

    pub fn state_len(&self) -> usize {
        match self.kind {
            CellKind::Fir => 0,
            CellKind::Rnn | CellKind::Gru => self.n_h,
            CellKind::Lstm | CellKind::Olstm => 2 * self.n_h,
        }
    }

    /// Activations kept per step for the backward pass.
    pub fn cache_len(&self) -> usize {
        match self.kind {
            CellKind::Fir | CellKind::Rnn => self.n_h,
            CellKind::Gru => 3 * self.n_h,
            CellKind::Lstm | CellKind::Olstm => 5 * self.n_h,
        }
    }

    pub fn gate(&self, k: usize) -> GateLayout {
        let (n_u, n_h) = (self.n_u, self.n_h);
        if self.kind == CellKind::Olstm {
            let cols = n_u + n_h;
            let w = k * n_h * cols;
            return GateLayout { w, w_stride: cols, u: Some(w + n_u), u_stride: cols, b: 4 * n_h * cols + k * n_h };
        }
        let base = k * self.gate_block();
        let rec = self.kind.is_recurrent();
        GateLayout {
            w: base,
            w_stride: n_u,
            u: rec.then_some(base + n_h * n_u),
            u_stride: n_h,
            b: base + n_h * n_u + if rec { n_h * n_h } else { 0 },
        }
    }
}

#[inline]
fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

#[inline]
fn affine(p: &[f64], g: &GateLayout, n_h: usize, x: &[f64], h: Option<&[f64]>, out: &mut [f64]) {
    for i in 0..n_h {
        let mut s = p[g.b + i];
        let w = &p[g.w + i * g.w_stride..g.w + i * g.w_stride + x.len()];
        for (a, b) in w.iter().zip(x) {
            s += a * b;
        }
        if let (Some(u), Some(h)) = (g.u, h) {
            let uw = &p[u + i * g.u_stride..u + i * g.u_stride + h.len()];
            for (a, b) in uw.iter().zip(h) {
                s += a * b;
            }
        }
        out[i] = s;
    }
}

/// Accumulates parameter gradients of one gate and, when given, adds
/// `Uᵀ·da` into `dh`.
#[inline]
fn affine_back(
    p: &[f64],
    g: &GateLayout,
    x: &[f64],
    h: Option<&[f64]>,
    da: &[f64],
    grad: &mut [f64],
    dh: Option<&mut [f64]>,
) {
    for (i, &d) in da.iter().enumerate() {
        if d == 0.0 {
            continue;
        }
        grad[g.b + i] += d;
        let gw = &mut grad[g.w + i * g.w_stride..g.w + i * g.w_stride + x.len()];
        for (a, b) in gw.iter_mut().zip(x) {
            *a += d * b;
        }
        if let (Some(u), Some(h)) = (g.u, h) {
            let gu = &mut grad[u + i * g.u_stride..u + i * g.u_stride + h.len()];
            for (a, b) in gu.iter_mut().zip(h) {
                *a += d * b;
            }
        }
    }
    if let (Some(u), Some(dh)) = (g.u, dh) {
        for (i, &d) in da.iter().enumerate() {
            if d == 0.0 {
                continue;
            }
            let uw = &p[u + i * g.u_stride..u + i * g.u_stride + dh.len()];
            for (acc, w) in dh.iter_mut().zip(uw) {
                *acc += d * w;
            }
        }
    }
}

/// All `4n_h` olstm pre-activations as one product with `[x | h]`.
fn fused_affine(p: &[f64], shape: &CellShape, x: &[f64], h: &[f64], out: &mut [f64]) {
    let cols = shape.n_u + shape.n_h;
    let bias = 4 * shape.n_h * cols;
    for r in 0..4 * shape.n_h {
        let row = &p[r * cols..(r + 1) * cols];
        let mut s = p[bias + r];
        for (a, b) in row[..shape.n_u].iter().zip(x) {
            s += a * b;
        }
        for (a, b) in row[shape.n_u..].iter().zip(h) {
            s += a * b;
        }
        out[r] = s;
    }
}

fn readout(p: &[f64], shape: &CellShape, h: &[f64]) -> f64 {
    let ro = shape.readout_offset();
    let mut y = p[ro + shape.n_h];
    for (w, v) in p[ro..ro + shape.n_h].iter().zip(h) {
        y += w * v;
    }
    y
}

/// Reusable buffers for [`cell_forward`] and [`cell_backward`].
#[derive(Debug, Clone)]
pub struct Scratch {
    pre: Vec<f64>,
    rh: Vec<f64>,
    dh: Vec<f64>,
    dc: Vec<f64>,
    da: Vec<f64>,
    drh: Vec<f64>,
    out: Vec<f64>,
}

impl Scratch {
    pub fn new(shape: &CellShape) -> Self {
        let n = shape.n_h;
        Scratch {
            pre: vec![0.0; 4 * n],
            rh: vec![0.0; n],
            dh: vec![0.0; n],
            dc: vec![0.0; n],
            da: vec![0.0; 4 * n],
            drh: vec![0.0; n],
            out: vec![0.0; 2 * n],
        }
    }
}

/// One step: writes the next state and the cached activations, returns `y′`.
pub fn cell_forward(
    shape: &CellShape,
    p: &[f64],
    x: &[f64],
    state: &[f64],
    next: &mut [f64],
    cache: &mut [f64],
    s: &mut Scratch,
) -> f64 {
    let n = shape.n_h;
    match shape.kind {
        CellKind::Fir => {
            affine(p, &shape.gate(0), n, x, None, &mut s.pre[..n]);
            for i in 0..n {
                cache[i] = s.pre[i].tanh();
            }
            readout(p, shape, &cache[..n])
        }
        CellKind::Rnn => {
            affine(p, &shape.gate(0), n, x, Some(state), &mut s.pre[..n]);
            for i in 0..n {
                next[i] = s.pre[i].tanh();
                cache[i] = next[i];
            }
            readout(p, shape, next)
        }
        CellKind::Gru => {
            let (z, rest) = cache.split_at_mut(n);
            let (r, ht) = rest.split_at_mut(n);
            affine(p, &shape.gate(0), n, x, Some(state), &mut s.pre[..n]);
            for i in 0..n {
                z[i] = sigmoid(s.pre[i]);
            }
            affine(p, &shape.gate(1), n, x, Some(state), &mut s.pre[..n]);
            for i in 0..n {
                r[i] = sigmoid(s.pre[i]);
                s.rh[i] = r[i] * state[i];
            }
            affine(p, &shape.gate(2), n, x, Some(&s.rh), &mut s.pre[..n]);
            for i in 0..n {
                ht[i] = s.pre[i].tanh();
                next[i] = (1.0 - z[i]) * state[i] + z[i] * ht[i];
            }
            readout(p, shape, next)
        }
        CellKind::Lstm | CellKind::Olstm => {
            let (h, c) = state.split_at(n);
            if shape.kind == CellKind::Olstm {
                fused_affine(p, shape, x, h, &mut s.pre);
            } else {
                for k in 0..4 {
                    affine(p, &shape.gate(k), n, x, Some(h), &mut s.pre[k * n..(k + 1) * n]);
                }
            }
            let (hn, cn) = next.split_at_mut(n);
            for i in 0..n {
                let ig = sigmoid(s.pre[i]);
                let fg = sigmoid(s.pre[n + i]);
                let gg = s.pre[2 * n + i].tanh();
                let og = sigmoid(s.pre[3 * n + i]);
                cn[i] = fg * c[i] + ig * gg;
                let tc = cn[i].tanh();
                hn[i] = og * tc;
                cache[i] = ig;
                cache[n + i] = fg;
                cache[2 * n + i] = gg;
                cache[3 * n + i] = og;
                cache[4 * n + i] = tc;
            }
            readout(p, shape, hn)
        }
    }
}

/// Backward through one step. On entry `d_state` holds `∂L/∂next`; on exit
/// it holds `∂L/∂state`. `dy` is `∂L/∂y′` for this step.
#[allow(clippy::too_many_arguments)]
pub fn cell_backward(
    shape: &CellShape,
    p: &[f64],
    x: &[f64],
    state: &[f64],
    next: &[f64],
    cache: &[f64],
    dy: f64,
    d_state: &mut [f64],
    grad: &mut [f64],
    s: &mut Scratch,
) {
    let n = shape.n_h;
    let ro = shape.readout_offset();
    let h_out: &[f64] = match shape.kind {
        CellKind::Fir => &cache[..n],
        _ => &next[..n],
    };
    grad[ro + n] += dy;
    for i in 0..n {
        grad[ro + i] += dy * h_out[i];
        s.dh[i] = p[ro + i] * dy + if shape.kind.is_recurrent() { d_state[i] } else { 0.0 };
    }
    match shape.kind {
        CellKind::Fir => {
            for i in 0..n {
                s.da[i] = s.dh[i] * (1.0 - cache[i] * cache[i]);
            }
            affine_back(p, &shape.gate(0), x, None, &s.da[..n], grad, None);
        }
        CellKind::Rnn => {
            for i in 0..n {
                s.da[i] = s.dh[i] * (1.0 - cache[i] * cache[i]);
                s.out[i] = 0.0;
            }
            affine_back(p, &shape.gate(0), x, Some(state), &s.da[..n], grad, Some(&mut s.out[..n]));
            d_state.copy_from_slice(&s.out[..n]);
        }
        CellKind::Gru => {
            let (z, rest) = cache.split_at(n);
            let (r, ht) = rest.split_at(n);
            for i in 0..n {
                s.rh[i] = r[i] * state[i];
                s.out[i] = s.dh[i] * (1.0 - z[i]);
                s.drh[i] = 0.0;
                // candidate
                s.da[2 * n + i] = s.dh[i] * z[i] * (1.0 - ht[i] * ht[i]);
                // update gate
                s.da[i] = s.dh[i] * (ht[i] - state[i]) * z[i] * (1.0 - z[i]);
            }
            let (da_z, rest) = s.da.split_at_mut(n);
            let (da_r, rest) = rest.split_at_mut(n);
            let da_c = &rest[..n];
            affine_back(p, &shape.gate(2), x, Some(&s.rh), da_c, grad, Some(&mut s.drh));
            for i in 0..n {
                s.out[i] += s.drh[i] * r[i];
                da_r[i] = s.drh[i] * state[i] * r[i] * (1.0 - r[i]);
            }
            affine_back(p, &shape.gate(0), x, Some(state), da_z, grad, Some(&mut s.out[..n]));
            affine_back(p, &shape.gate(1), x, Some(state), da_r, grad, Some(&mut s.out[..n]));
            d_state.copy_from_slice(&s.out[..n]);
        }
        CellKind::Lstm | CellKind::Olstm => {
            let (h, c) = state.split_at(n);
            for i in 0..n {
                let (ig, fg, gg, og, tc) = (cache[i], cache[n + i], cache[2 * n + i], cache[3 * n + i], cache[4 * n + i]);
                let dc = d_state[n + i] + s.dh[i] * og * (1.0 - tc * tc);
                s.dc[i] = dc * fg;
                s.da[i] = dc * gg * ig * (1.0 - ig);
                s.da[n + i] = dc * c[i] * fg * (1.0 - fg);
                s.da[2 * n + i] = dc * ig * (1.0 - gg * gg);
                s.da[3 * n + i] = s.dh[i] * tc * og * (1.0 - og);
                s.out[i] = 0.0;
            }
            for k in 0..4 {
                affine_back(p, &shape.gate(k), x, Some(h), &s.da[k * n..(k + 1) * n], grad, Some(&mut s.out[..n]));
            }
            d_state[..n].copy_from_slice(&s.out[..n]);
            d_state[n..].copy_from_slice(&s.dc[..n]);
        }
    }
}

/// Writes `x_t = [u_t, …, u_{t-n_u+1}]`; requires `t ≥ n_u − 1`.
#[inline]
pub fn stack_inputs(u: &[f64], t: usize, x: &mut [f64]) {
    for (j, v) in x.iter_mut().enumerate() {
        *v = u[t - j];
    }
}

/// Squared-error loss of one subsequence `[start, start+len)` simulated from
/// a zero state; steps with local index `< washout` are excluded.
/// Returns `(sum of squared errors, counted steps)` and, when `grad` is
/// given, adds `∂(sse)/∂p` into it.
#[allow(clippy::too_many_arguments)]
pub fn sequence_sse(
    shape: &CellShape,
    p: &[f64],
    u: &[f64],
    y: &[f64],
    start: usize,
    len: usize,
    washout: usize,
    grad: Option<&mut [f64]>,
) -> (f64, usize) {
    let sl = shape.state_len();
    let cl = shape.cache_len();
    let mut states = vec![0.0; (len + 1) * sl];
    let mut caches = vec![0.0; len * cl];
    let mut errs = vec![0.0; len];
    let mut x = vec![0.0; shape.n_u];
    let mut s = Scratch::new(shape);
    let mut sse = 0.0;
    let mut count = 0;
    for k in 0..len {
        let t = start + k;
        stack_inputs(u, t, &mut x);
        let (cur, nxt) = states[k * sl..(k + 2) * sl].split_at_mut(sl);
        let yhat = cell_forward(shape, p, &x, cur, nxt, &mut caches[k * cl..(k + 1) * cl], &mut s);
        if k >= washout {
            let e = yhat - y[t];
            errs[k] = e;
            sse += e * e;
            count += 1;
        }
    }
    if let Some(g) = grad {
        let mut d_state = vec![0.0; sl];
        for k in (0..len).rev() {
            stack_inputs(u, start + k, &mut x);
            cell_backward(
                shape,
                p,
                &x,
                &states[k * sl..(k + 1) * sl],
                &states[(k + 1) * sl..(k + 2) * sl],
                &caches[k * cl..(k + 1) * cl],
                2.0 * errs[k],
                &mut d_state,
                g,
                &mut s,
            );
        }
    }
    (sse, count)
}
