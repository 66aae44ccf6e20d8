//! Small self-contained LSTM classifier with hand-written backpropagation.
//!
//! Network: an LSTM over a `T x input` sequence, whose final hidden state goes
//! through `linear1 -> layer norm -> ReLU -> linear2` to a single logit.
//! Training uses sigmoid cross-entropy and Adam. All arithmetic is `f64`.
//!
//! Gate rows are laid out `[input, forget, candidate, output]`, each `hidden`
//! rows tall; all matrices are row-major.

#![allow(clippy::needless_range_loop)]

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dd::Dd;

pub const LAYER_NORM_EPS: f64 = 1e-5;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum NeuralError {
    #[error("input sequence contains a non-finite value")]
    NonFiniteInput,
    #[error("input sequence is empty or not a multiple of the input width {0}")]
    BadSequence(usize),
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("bad parameter snapshot: {0}")]
    BadSnapshot(String),
}

/// Names of the parameter tensors, in snapshot order.
pub const FIELD_ORDER: [&str; 9] = ["w_ih", "w_hh", "b", "w1", "b1", "gamma", "beta", "w2", "b2"];

#[derive(Debug, Clone, PartialEq)]
pub struct NetParams {
    pub input: usize,
    pub hidden: usize,
    /// `4H x I`
    pub w_ih: Vec<f64>,
    /// `4H x H`
    pub w_hh: Vec<f64>,
    /// `4H`
    pub b: Vec<f64>,
    /// `H x H`
    pub w1: Vec<f64>,
    pub b1: Vec<f64>,
    pub gamma: Vec<f64>,
    pub beta: Vec<f64>,
    /// `H`
    pub w2: Vec<f64>,
    /// `1`
    pub b2: Vec<f64>,
}

/// Gradients share the parameter layout.
pub type Gradients = NetParams;

/// Which tensors a finite-difference check covers.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ParamGroup {
    All,
    Lstm,
    Linear1,
    LayerNorm,
    Linear2,
}

impl ParamGroup {
    fn contains(self, field: &str) -> bool {
        match self {
            ParamGroup::All => true,
            ParamGroup::Lstm => matches!(field, "w_ih" | "w_hh" | "b"),
            ParamGroup::Linear1 => matches!(field, "w1" | "b1"),
            ParamGroup::LayerNorm => matches!(field, "gamma" | "beta"),
            ParamGroup::Linear2 => matches!(field, "w2" | "b2"),
        }
    }
}

impl NetParams {
    pub fn zeros(input: usize, hidden: usize) -> Self {
        let g = 4 * hidden;
        NetParams {
            input,
            hidden,
            w_ih: vec![0.0; g * input],
            w_hh: vec![0.0; g * hidden],
            b: vec![0.0; g],
            w1: vec![0.0; hidden * hidden],
            b1: vec![0.0; hidden],
            gamma: vec![0.0; hidden],
            beta: vec![0.0; hidden],
            w2: vec![0.0; hidden],
            b2: vec![0.0; 1],
        }
    }

    /// Uniform `[-1/sqrt(fan_in), 1/sqrt(fan_in)]` per weight matrix, LSTM
    /// biases zero except the forget gate at +1, layer norm at identity.
    pub fn init<R: Rng + ?Sized>(input: usize, hidden: usize, rng: &mut R) -> Self {
        let mut p = Self::zeros(input, hidden);
        let fill = |v: &mut [f64], fan_in: usize, rng: &mut R| {
            let bound = 1.0 / (fan_in as f64).sqrt();
            for x in v {
                *x = rng.random_range(-bound..bound);
            }
        };
        fill(&mut p.w_ih, input, rng);
        fill(&mut p.w_hh, hidden, rng);
        p.b[hidden..2 * hidden].fill(1.0);
        fill(&mut p.w1, hidden, rng);
        fill(&mut p.b1, hidden, rng);
        p.gamma.fill(1.0);
        fill(&mut p.w2, hidden, rng);
        fill(&mut p.b2, hidden, rng);
        p
    }

    pub fn tensors(&self) -> [(&'static str, &Vec<f64>); 9] {
        [
            ("w_ih", &self.w_ih),
            ("w_hh", &self.w_hh),
            ("b", &self.b),
            ("w1", &self.w1),
            ("b1", &self.b1),
            ("gamma", &self.gamma),
            ("beta", &self.beta),
            ("w2", &self.w2),
            ("b2", &self.b2),
        ]
    }

    pub fn tensors_mut(&mut self) -> [(&'static str, &mut Vec<f64>); 9] {
        [
            ("w_ih", &mut self.w_ih),
            ("w_hh", &mut self.w_hh),
            ("b", &mut self.b),
            ("w1", &mut self.w1),
            ("b1", &mut self.b1),
            ("gamma", &mut self.gamma),
            ("beta", &mut self.beta),
            ("w2", &mut self.w2),
            ("b2", &mut self.b2),
        ]
    }

    /// `(rows, cols)` of each tensor in [`FIELD_ORDER`].
    pub fn shapes(&self) -> [(usize, usize); 9] {
        let (i, h) = (self.input, self.hidden);
        [
            (4 * h, i),
            (4 * h, h),
            (4 * h, 1),
            (h, h),
            (h, 1),
            (h, 1),
            (h, 1),
            (1, h),
            (1, 1),
        ]
    }

    pub fn param_count(&self) -> usize {
        self.tensors().iter().map(|(_, t)| t.len()).sum()
    }

    pub fn same_shape(&self, other: &NetParams) -> bool {
        self.input == other.input
            && self.hidden == other.hidden
            && self
                .tensors()
                .iter()
                .zip(other.tensors().iter())
                .all(|((_, a), (_, b))| a.len() == b.len())
    }

    pub fn is_finite(&self) -> bool {
        self.tensors().iter().all(|(_, t)| t.iter().all(|x| x.is_finite()))
    }

    pub fn zeros_like(&self) -> Self {
        Self::zeros(self.input, self.hidden)
    }

    pub fn fill_zero(&mut self) {
        for (_, t) in self.tensors_mut() {
            t.fill(0.0);
        }
    }

    pub fn scale(&mut self, s: f64) {
        for (_, t) in self.tensors_mut() {
            t.iter_mut().for_each(|x| *x *= s);
        }
    }

    pub fn to_snapshot(&self) -> NetSnapshot {
        let shapes = self.shapes();
        NetSnapshot {
            input: self.input,
            hidden: self.hidden,
            fields: FIELD_ORDER
                .iter()
                .zip(shapes)
                .map(|(name, (rows, cols))| FieldShape {
                    name: name.to_string(),
                    rows,
                    cols,
                })
                .collect(),
            values: self.tensors().iter().flat_map(|(_, t)| t.iter().copied()).collect(),
        }
    }

    pub fn from_snapshot(snap: &NetSnapshot) -> Result<Self, NeuralError> {
        let mut p = Self::zeros(snap.input, snap.hidden);
        let expected: Vec<FieldShape> = p.to_snapshot().fields;
        if snap.fields != expected {
            return Err(NeuralError::BadSnapshot("field header does not match input/hidden sizes".into()));
        }
        if snap.values.len() != p.param_count() {
            return Err(NeuralError::BadSnapshot(format!(
                "expected {} values, found {}",
                p.param_count(),
                snap.values.len()
            )));
        }
        let mut rest = snap.values.as_slice();
        for (_, t) in p.tensors_mut() {
            let (head, tail) = rest.split_at(t.len());
            t.copy_from_slice(head);
            rest = tail;
        }
        Ok(p)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FieldShape {
    pub name: String,
    pub rows: usize,
    pub cols: usize,
}

/// Flat parameter dump: a shape header plus all values concatenated in
/// [`FIELD_ORDER`], each tensor row-major.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NetSnapshot {
    pub input: usize,
    pub hidden: usize,
    pub fields: Vec<FieldShape>,
    pub values: Vec<f64>,
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
fn dot(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    let mut acc = [0.0f64; 4];
    let ca = a.chunks_exact(4);
    let cb = b.chunks_exact(4);
    let (ra, rb) = (ca.remainder(), cb.remainder());
    for (x, y) in ca.zip(cb) {
        acc[0] += x[0] * y[0];
        acc[1] += x[1] * y[1];
        acc[2] += x[2] * y[2];
        acc[3] += x[3] * y[3];
    }
    let mut s = (acc[0] + acc[1]) + (acc[2] + acc[3]);
    for (x, y) in ra.iter().zip(rb) {
        s += x * y;
    }
    s
}

#[inline]
fn axpy(y: &mut [f64], a: f64, x: &[f64]) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += a * xi;
    }
}

/// Activations kept for backpropagation through time.
#[derive(Debug, Clone)]
pub struct LstmCache {
    pub steps: usize,
    xs: Vec<f64>,
    /// Post-activation gates per step, `T x 4H`.
    gates: Vec<f64>,
    /// Cell states `c_0..c_T`, `(T+1) x H`.
    cs: Vec<f64>,
    tanh_c: Vec<f64>,
    /// Hidden states `h_0..h_T`, `(T+1) x H`.
    hs: Vec<f64>,
}

impl LstmCache {
    pub fn final_hidden(&self) -> &[f64] {
        let h = self.hs.len() / (self.steps + 1);
        &self.hs[self.steps * h..]
    }
}

fn check_sequence(params: &NetParams, seq: &[f64]) -> Result<usize, NeuralError> {
    if seq.is_empty() || !seq.len().is_multiple_of(params.input) {
        return Err(NeuralError::BadSequence(params.input));
    }
    if seq.iter().any(|x| !x.is_finite()) {
        return Err(NeuralError::NonFiniteInput);
    }
    Ok(seq.len() / params.input)
}

/// Runs the LSTM over `seq` (`T x input`, row-major) from zero state.
pub fn lstm_forward(params: &NetParams, seq: &[f64]) -> Result<LstmCache, NeuralError> {
    let steps = check_sequence(params, seq)?;
    let (n_in, h) = (params.input, params.hidden);
    let g4 = 4 * h;
    let mut cache = LstmCache {
        steps,
        xs: seq.to_vec(),
        gates: vec![0.0; steps * g4],
        cs: vec![0.0; (steps + 1) * h],
        tanh_c: vec![0.0; steps * h],
        hs: vec![0.0; (steps + 1) * h],
    };
    for t in 0..steps {
        let x = &seq[t * n_in..(t + 1) * n_in];
        let (hs_prev, hs_next) = cache.hs.split_at_mut((t + 1) * h);
        let h_prev = &hs_prev[t * h..];
        let gates = &mut cache.gates[t * g4..(t + 1) * g4];
        for r in 0..g4 {
            let a = params.b[r]
                + dot(&params.w_ih[r * n_in..(r + 1) * n_in], x)
                + dot(&params.w_hh[r * h..(r + 1) * h], h_prev);
            gates[r] = if (2 * h..3 * h).contains(&r) { a.tanh() } else { sigmoid(a) };
        }
        let (cs_prev, cs_next) = cache.cs.split_at_mut((t + 1) * h);
        let c_prev = &cs_prev[t * h..];
        let c = &mut cs_next[..h];
        let tc = &mut cache.tanh_c[t * h..(t + 1) * h];
        let h_out = &mut hs_next[..h];
        for j in 0..h {
            let (i, f, g, o) = (gates[j], gates[h + j], gates[2 * h + j], gates[3 * h + j]);
            c[j] = f * c_prev[j] + i * g;
            tc[j] = c[j].tanh();
            h_out[j] = o * tc[j];
        }
    }
    Ok(cache)
}

#[derive(Debug, Clone)]
pub struct HeadCache {
    h: Vec<f64>,
    xhat: Vec<f64>,
    inv_std: f64,
    /// Layer-norm output before ReLU.
    y: Vec<f64>,
    r: Vec<f64>,
}

/// `linear2(relu(layer_norm(linear1(h))))`.
pub fn head_forward(params: &NetParams, h: &[f64]) -> (f64, HeadCache) {
    let n = params.hidden;
    let z: Vec<f64> = (0..n)
        .map(|j| params.b1[j] + dot(&params.w1[j * n..(j + 1) * n], h))
        .collect();
    let mean = z.iter().sum::<f64>() / n as f64;
    let var = z.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n as f64;
    let inv_std = 1.0 / (var + LAYER_NORM_EPS).sqrt();
    let xhat: Vec<f64> = z.iter().map(|v| (v - mean) * inv_std).collect();
    let y: Vec<f64> = (0..n).map(|j| params.gamma[j] * xhat[j] + params.beta[j]).collect();
    let r: Vec<f64> = y.iter().map(|&v| v.max(0.0)).collect();
    let logit = params.b2[0] + dot(&params.w2, &r);
    (
        logit,
        HeadCache {
            h: h.to_vec(),
            xhat,
            inv_std,
            y,
            r,
        },
    )
}

#[derive(Debug, Clone)]
pub struct ForwardCache {
    pub lstm: LstmCache,
    pub head: HeadCache,
    pub logit: f64,
}

pub fn forward(params: &NetParams, seq: &[f64]) -> Result<ForwardCache, NeuralError> {
    let lstm = lstm_forward(params, seq)?;
    let (logit, head) = head_forward(params, lstm.final_hidden());
    Ok(ForwardCache { lstm, head, logit })
}

pub fn predict_logit(params: &NetParams, seq: &[f64]) -> Result<f64, NeuralError> {
    Ok(forward(params, seq)?.logit)
}

/// Sigmoid cross-entropy on a logit. Returns `(loss, d loss / d logit)`.
pub fn bce_loss(logit: f64, label: f64) -> (f64, f64) {
    let loss = logit.max(0.0) - logit * label + (-logit.abs()).exp().ln_1p();
    (loss, sigmoid(logit) - label)
}

/// Adds the gradient of the loss into `grads`, given `d loss / d logit`.
pub fn backward_into(params: &NetParams, cache: &ForwardCache, dlogit: f64, grads: &mut Gradients) {
    let n = params.hidden;
    let hc = &cache.head;

    // head
    grads.b2[0] += dlogit;
    axpy(&mut grads.w2, dlogit, &hc.r);
    let mut dxhat = vec![0.0; n];
    for j in 0..n {
        let dy = if hc.y[j] > 0.0 { dlogit * params.w2[j] } else { 0.0 };
        grads.gamma[j] += dy * hc.xhat[j];
        grads.beta[j] += dy;
        dxhat[j] = dy * params.gamma[j];
    }
    let mean_d = dxhat.iter().sum::<f64>() / n as f64;
    let mean_dx = dxhat.iter().zip(&hc.xhat).map(|(d, x)| d * x).sum::<f64>() / n as f64;
    let dz: Vec<f64> = (0..n)
        .map(|j| hc.inv_std * (dxhat[j] - mean_d - hc.xhat[j] * mean_dx))
        .collect();
    let mut dh = vec![0.0; n];
    for j in 0..n {
        grads.b1[j] += dz[j];
        axpy(&mut grads.w1[j * n..(j + 1) * n], dz[j], &hc.h);
        axpy(&mut dh, dz[j], &params.w1[j * n..(j + 1) * n]);
    }

    // LSTM, full BPTT
    let lc = &cache.lstm;
    let n_in = params.input;
    let g4 = 4 * n;
    let mut dc = vec![0.0; n];
    let mut da = vec![0.0; g4];
    for t in (0..lc.steps).rev() {
        let gates = &lc.gates[t * g4..(t + 1) * g4];
        let tc = &lc.tanh_c[t * n..(t + 1) * n];
        let c_prev = &lc.cs[t * n..(t + 1) * n];
        for j in 0..n {
            let (i, f, g, o) = (gates[j], gates[n + j], gates[2 * n + j], gates[3 * n + j]);
            let d_o = dh[j] * tc[j];
            dc[j] += dh[j] * o * (1.0 - tc[j] * tc[j]);
            let d_i = dc[j] * g;
            let d_g = dc[j] * i;
            let d_f = dc[j] * c_prev[j];
            da[j] = d_i * i * (1.0 - i);
            da[n + j] = d_f * f * (1.0 - f);
            da[2 * n + j] = d_g * (1.0 - g * g);
            da[3 * n + j] = d_o * o * (1.0 - o);
            dc[j] *= f;
        }
        let x = &lc.xs[t * n_in..(t + 1) * n_in];
        let h_prev = &lc.hs[t * n..(t + 1) * n];
        dh.fill(0.0);
        for r in 0..g4 {
            let a = da[r];
            grads.b[r] += a;
            axpy(&mut grads.w_ih[r * n_in..(r + 1) * n_in], a, x);
            axpy(&mut grads.w_hh[r * n..(r + 1) * n], a, h_prev);
            axpy(&mut dh, a, &params.w_hh[r * n..(r + 1) * n]);
        }
    }
}

pub fn backward(params: &NetParams, cache: &ForwardCache, dlogit: f64) -> Gradients {
    let mut g = params.zeros_like();
    backward_into(params, cache, dlogit, &mut g);
    g
}

pub fn loss(params: &NetParams, seq: &[f64], label: f64) -> Result<f64, NeuralError> {
    Ok(bce_loss(predict_logit(params, seq)?, label).0)
}

pub fn loss_and_grad(params: &NetParams, seq: &[f64], label: f64) -> Result<(f64, Gradients), NeuralError> {
    let cache = forward(params, seq)?;
    let (l, d) = bce_loss(cache.logit, label);
    Ok((l, backward(params, &cache, d)))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig {
            lr: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// Adam moment accumulators for one network.
#[derive(Debug, Clone)]
pub struct OptimizerState {
    pub config: AdamConfig,
    pub step: u64,
    m: NetParams,
    v: NetParams,
}

impl OptimizerState {
    pub fn new(config: AdamConfig, like: &NetParams) -> Self {
        OptimizerState {
            config,
            step: 0,
            m: like.zeros_like(),
            v: like.zeros_like(),
        }
    }
}

/// One bias-corrected Adam update.
pub fn adam_step(params: &mut NetParams, grads: &Gradients, state: &mut OptimizerState) -> Result<(), NeuralError> {
    if !params.same_shape(grads) || !params.same_shape(&state.m) {
        return Err(NeuralError::ShapeMismatch(format!(
            "params {}x{}, grads {}x{}, state {}x{}",
            params.input, params.hidden, grads.input, grads.hidden, state.m.input, state.m.hidden
        )));
    }
    state.step += 1;
    let AdamConfig { lr, beta1, beta2, eps } = state.config;
    let bc1 = 1.0 - beta1.powi(state.step as i32);
    let bc2 = 1.0 - beta2.powi(state.step as i32);
    let OptimizerState { m, v, .. } = state;
    for (((_, p), (_, g)), ((_, m), (_, v))) in params
        .tensors_mut()
        .into_iter()
        .zip(grads.tensors())
        .zip(m.tensors_mut().into_iter().zip(v.tensors_mut()))
    {
        for i in 0..p.len() {
            m[i] = beta1 * m[i] + (1.0 - beta1) * g[i];
            v[i] = beta2 * v[i] + (1.0 - beta2) * g[i] * g[i];
            let m_hat = m[i] / bc1;
            let v_hat = v[i] / bc2;
            p[i] -= lr * m_hat / (v_hat.sqrt() + eps);
        }
    }
    Ok(())
}

/// Max relative error between analytic and central-difference gradients over
/// every parameter: `|a - n| / max(|a|, |n|, 1e-8)`.
///
/// A double-precision difference quotient carries noise of roughly one ulp of
/// the loss divided by `2 eps`, which swamps gradients near the `1e-8` floor.
/// Entries whose double-precision estimate disagrees beyond `1e-6` are
/// re-evaluated with the loss computed in double-double arithmetic.
pub fn finite_difference_check(params: &NetParams, seq: &[f64], label: f64, eps: f64) -> Result<f64, NeuralError> {
    finite_difference_check_group(params, seq, label, eps, ParamGroup::All)
}

const REFINE_ABOVE: f64 = 1e-6;

fn relative_error(a: f64, n: f64) -> f64 {
    (a - n).abs() / a.abs().max(n.abs()).max(1e-8)
}

pub fn finite_difference_check_group(
    params: &NetParams,
    seq: &[f64],
    label: f64,
    eps: f64,
    group: ParamGroup,
) -> Result<f64, NeuralError> {
    let (_, analytic) = loss_and_grad(params, seq, label)?;
    let mut probe = params.clone();
    let mut extended: Option<Vec<Vec<Dd>>> = None;
    let mut worst = 0.0f64;
    for (k, (name, grad)) in analytic.tensors().into_iter().enumerate() {
        if !group.contains(name) {
            continue;
        }
        for i in 0..grad.len() {
            let orig = probe.tensors()[k].1[i];
            probe.tensors_mut()[k].1[i] = orig + eps;
            let up = loss(&probe, seq, label)?;
            probe.tensors_mut()[k].1[i] = orig - eps;
            let down = loss(&probe, seq, label)?;
            probe.tensors_mut()[k].1[i] = orig;
            let mut rel = relative_error(grad[i], (up - down) / (2.0 * eps));
            if rel > REFINE_ABOVE {
                let t = extended.get_or_insert_with(|| {
                    params
                        .tensors()
                        .iter()
                        .map(|(_, t)| t.iter().map(|&v| Dd::new(v)).collect())
                        .collect()
                });
                let base = t[k][i];
                t[k][i] = base + eps;
                let up = loss_extended(t, params.input, params.hidden, seq, label);
                t[k][i] = base - eps;
                let down = loss_extended(t, params.input, params.hidden, seq, label);
                t[k][i] = base;
                rel = relative_error(grad[i], ((up - down) / (2.0 * eps)).hi);
            }
            worst = worst.max(rel);
        }
    }
    Ok(worst)
}

fn sigmoid_extended(x: Dd) -> Dd {
    ((-x).exp() + 1.0).recip()
}

fn tanh_extended(x: Dd) -> Dd {
    let t = Dd::ONE - Dd::new(2.0) / ((x.abs() * 2.0).exp() + 1.0);
    if x.is_negative() {
        -t
    } else {
        t
    }
}

/// Straightforward forward pass and loss in double-double arithmetic over
/// tensors given in [`FIELD_ORDER`].
fn loss_extended(t: &[Vec<Dd>], n_in: usize, n: usize, seq: &[f64], label: f64) -> Dd {
    let (w_ih, w_hh, b, w1, b1, gamma, beta, w2, b2) = (&t[0], &t[1], &t[2], &t[3], &t[4], &t[5], &t[6], &t[7], &t[8]);
    let zero = Dd::new(0.0);
    let mut h = vec![zero; n];
    let mut c = vec![zero; n];
    let mut a = vec![zero; 4 * n];
    for x in seq.chunks_exact(n_in) {
        for (r, ar) in a.iter_mut().enumerate() {
            let mut s = b[r];
            for (j, &xj) in x.iter().enumerate() {
                s += w_ih[r * n_in + j] * xj;
            }
            for (k, &hk) in h.iter().enumerate() {
                s += w_hh[r * n + k] * hk;
            }
            *ar = s;
        }
        for j in 0..n {
            let i = sigmoid_extended(a[j]);
            let f = sigmoid_extended(a[n + j]);
            let g = tanh_extended(a[2 * n + j]);
            let o = sigmoid_extended(a[3 * n + j]);
            c[j] = f * c[j] + i * g;
            h[j] = o * tanh_extended(c[j]);
        }
    }
    let z: Vec<Dd> = (0..n)
        .map(|j| {
            let mut s = b1[j];
            for (k, &hk) in h.iter().enumerate() {
                s += w1[j * n + k] * hk;
            }
            s
        })
        .collect();
    let mean = z.iter().fold(zero, |s, &v| s + v) / n as f64;
    let var = z.iter().fold(zero, |s, &v| s + (v - mean) * (v - mean)) / n as f64;
    let inv_std = (var + LAYER_NORM_EPS).sqrt().recip();
    let mut logit = b2[0];
    for j in 0..n {
        let y = gamma[j] * ((z[j] - mean) * inv_std) + beta[j];
        if y.is_positive() {
            logit += w2[j] * y;
        }
    }
    let relu = if logit.is_positive() { logit } else { zero };
    relu - logit * label + (-logit.abs()).exp().ln_1p()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub adam: AdamConfig,
    /// Stop after an epoch whose mean training loss falls below this.
    pub early_stop_loss: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            epochs: 20,
            batch_size: 32,
            adam: AdamConfig::default(),
            early_stop_loss: 0.2,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainSummary {
    pub epochs_run: usize,
    pub optimizer_steps: u64,
    pub final_loss: f64,
}

/// Mini-batch training on `(sequence, label)` pairs. Batch gradients are
/// averaged; sample order is reshuffled from `rng` every epoch.
pub fn train<R: Rng + ?Sized>(
    params: &mut NetParams,
    samples: &[(Vec<f64>, f64)],
    config: &TrainConfig,
    rng: &mut R,
) -> Result<TrainSummary, NeuralError> {
    let mut state = OptimizerState::new(config.adam, params);
    let mut grads = params.zeros_like();
    let mut order: Vec<usize> = (0..samples.len()).collect();
    let mut summary = TrainSummary {
        epochs_run: 0,
        optimizer_steps: 0,
        final_loss: f64::NAN,
    };
    if samples.is_empty() {
        return Ok(summary);
    }
    let batch = config.batch_size.max(1);
    for _ in 0..config.epochs {
        order.shuffle(rng);
        let mut total = 0.0;
        for chunk in order.chunks(batch) {
            grads.fill_zero();
            for &i in chunk {
                let (seq, label) = &samples[i];
                let cache = forward(params, seq)?;
                let (l, d) = bce_loss(cache.logit, *label);
                total += l;
                backward_into(params, &cache, d, &mut grads);
            }
            grads.scale(1.0 / chunk.len() as f64);
            adam_step(params, &grads, &mut state)?;
        }
        summary.epochs_run += 1;
        summary.final_loss = total / samples.len() as f64;
        if summary.final_loss < config.early_stop_loss {
            break;
        }
    }
    summary.optimizer_steps = state.step;
    Ok(summary)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::rng_from_seed;

    fn random_seq<R: Rng>(rng: &mut R, steps: usize, input: usize) -> Vec<f64> {
        (0..steps * input).map(|_| rng.random_range(-1.0..1.0)).collect()
    }

    #[test]
    fn zero_weights_give_zero_hidden() {
        let p = NetParams::zeros(2, 8);
        let mut rng = rng_from_seed(1);
        let c = lstm_forward(&p, &random_seq(&mut rng, 10, 2)).unwrap();
        assert!(c.final_hidden().iter().all(|&x| x == 0.0));
        let (logit, _) = head_forward(&p, c.final_hidden());
        assert_eq!(logit, 0.0);
    }

    #[test]
    fn zero_input_head_returns_bias() {
        let mut p = NetParams::zeros(2, 4);
        p.b2[0] = 0.37;
        let (logit, _) = head_forward(&p, &[0.0; 4]);
        assert_eq!(logit, 0.37);
    }

    #[test]
    fn layer_norm_of_constant_is_zero() {
        let mut p = NetParams::zeros(2, 4);
        p.gamma.fill(1.0);
        p.b1.fill(2.5);
        let (_, cache) = head_forward(&p, &[0.3, -0.1, 0.2, 0.9]);
        assert!(cache.xhat.iter().all(|&x| x == 0.0));
    }

    #[test]
    fn single_step_matches_cell() {
        let mut rng = rng_from_seed(4);
        let p = NetParams::init(2, 3, &mut rng);
        let x = [0.4, -0.7];
        let c = lstm_forward(&p, &x).unwrap();
        let h = 3;
        let mut expect = vec![0.0; h];
        for j in 0..h {
            let pre = |gate: usize| {
                let r = gate * h + j;
                p.b[r] + p.w_ih[2 * r] * x[0] + p.w_ih[2 * r + 1] * x[1]
            };
            let cell = sigmoid(pre(0)) * pre(2).tanh();
            expect[j] = sigmoid(pre(3)) * cell.tanh();
        }
        for j in 0..h {
            assert!((c.final_hidden()[j] - expect[j]).abs() < 1e-15);
        }
    }

    #[test]
    fn bce_cases() {
        let (l0, g0) = bce_loss(0.0, 1.0);
        let (l1, g1) = bce_loss(0.0, 0.0);
        assert!((l0 - std::f64::consts::LN_2).abs() < 1e-15);
        assert_eq!(l0, l1);
        assert_eq!((g0, g1), (-0.5, 0.5));
        let (l, _) = bce_loss(20.0, 1.0);
        assert!((l - 2.061_153_6e-9).abs() < 1e-15, "{l}");
        for &z in &[-1e4, -700.0, 700.0, 1e4] {
            for &y in &[0.0, 1.0] {
                let (l, g) = bce_loss(z, y);
                assert!(l.is_finite() && g.is_finite());
            }
        }
    }

    #[test]
    fn backward_is_linear_in_upstream() {
        let mut rng = rng_from_seed(9);
        let p = NetParams::init(2, 5, &mut rng);
        let seq = random_seq(&mut rng, 6, 2);
        let cache = forward(&p, &seq).unwrap();
        let zero = backward(&p, &cache, 0.0);
        assert!(zero.tensors().iter().all(|(_, t)| t.iter().all(|&x| x == 0.0)));
        let g1 = backward(&p, &cache, 0.3);
        let g2 = backward(&p, &cache, 0.6);
        for ((_, a), (_, b)) in g1.tensors().iter().zip(g2.tensors().iter()) {
            for (x, y) in a.iter().zip(b.iter()) {
                assert!((2.0 * x - y).abs() <= 1e-14 * y.abs().max(1e-300));
            }
        }
    }

    #[test]
    fn gradient_check_small_nets() {
        for seed in 0..5 {
            let mut rng = rng_from_seed(100 + seed);
            let p = NetParams::init(2, 6, &mut rng);
            let seq = random_seq(&mut rng, 10, 2);
            let label = (seed % 2) as f64;
            let err = finite_difference_check(&p, &seq, label, 1e-5).unwrap();
            assert!(err < 1e-4, "seed {seed}: {err}");
        }
    }

    #[test]
    fn linear_head_gradient_is_tight() {
        let mut rng = rng_from_seed(17);
        let p = NetParams::init(2, 8, &mut rng);
        let seq = random_seq(&mut rng, 10, 2);
        let err = finite_difference_check_group(&p, &seq, 1.0, 1e-5, ParamGroup::Linear2).unwrap();
        assert!(err < 1e-7, "{err}");
    }

    #[test]
    fn extended_loss_matches_double() {
        let mut rng = rng_from_seed(21);
        let p = NetParams::init(2, 5, &mut rng);
        let seq = random_seq(&mut rng, 12, 2);
        let t: Vec<Vec<Dd>> = p
            .tensors()
            .iter()
            .map(|(_, t)| t.iter().map(|&v| Dd::new(v)).collect())
            .collect();
        for label in [0.0, 1.0] {
            let a = loss(&p, &seq, label).unwrap();
            let b = loss_extended(&t, 2, 5, &seq, label).hi;
            assert!((a - b).abs() < 1e-14 * a.abs().max(1.0), "{a} vs {b}");
        }
    }

    #[test]
    fn fd_check_is_deterministic() {
        let mut rng = rng_from_seed(3);
        let p = NetParams::init(2, 4, &mut rng);
        let seq = random_seq(&mut rng, 5, 2);
        let a = finite_difference_check(&p, &seq, 0.0, 1e-5).unwrap();
        let b = finite_difference_check(&p, &seq, 0.0, 1e-5).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn adam_cases() {
        let mut rng = rng_from_seed(5);
        let mut p = NetParams::init(2, 3, &mut rng);
        let before = p.clone();
        let mut st = OptimizerState::new(AdamConfig::default(), &p);
        let zero = p.zeros_like();
        adam_step(&mut p, &zero, &mut st).unwrap();
        assert_eq!(p, before);
        assert_eq!(st.step, 1);

        let mut g = p.zeros_like();
        for (_, t) in g.tensors_mut() {
            for (i, x) in t.iter_mut().enumerate() {
                *x = if i % 2 == 0 { 0.25 } else { -3.0 };
            }
        }
        let mut st = OptimizerState::new(AdamConfig::default(), &p);
        let start = p.clone();
        adam_step(&mut p, &g, &mut st).unwrap();
        for (((_, a), (_, b)), (_, gt)) in p.tensors().iter().zip(start.tensors().iter()).zip(g.tensors().iter()) {
            for i in 0..a.len() {
                let step = a[i] - b[i];
                let expect = -1e-3 * gt[i].signum();
                assert!((step - expect).abs() < 1e-10, "{step} vs {expect}");
            }
        }
        assert_eq!(st.step, 1);

        let other = NetParams::zeros(2, 4);
        assert!(matches!(
            adam_step(&mut p, &other, &mut st),
            Err(NeuralError::ShapeMismatch(_))
        ));
    }

    #[test]
    fn snapshot_round_trip_and_validation() {
        let mut rng = rng_from_seed(6);
        let p = NetParams::init(2, 4, &mut rng);
        let snap = p.to_snapshot();
        assert_eq!(snap.values.len(), p.param_count());
        assert_eq!(snap.fields[0].name, "w_ih");
        let json = serde_json::to_string(&snap).unwrap();
        let back = NetParams::from_snapshot(&serde_json::from_str(&json).unwrap()).unwrap();
        assert_eq!(p, back);
        let mut bad = snap.clone();
        bad.values.pop();
        assert!(NetParams::from_snapshot(&bad).is_err());
    }

    #[test]
    fn rejects_bad_input() {
        let p = NetParams::zeros(2, 3);
        assert_eq!(lstm_forward(&p, &[]).unwrap_err(), NeuralError::BadSequence(2));
        assert_eq!(lstm_forward(&p, &[1.0]).unwrap_err(), NeuralError::BadSequence(2));
        assert_eq!(
            lstm_forward(&p, &[1.0, f64::NAN]).unwrap_err(),
            NeuralError::NonFiniteInput
        );
    }

    #[test]
    fn init_layout() {
        let mut rng = rng_from_seed(2);
        let p = NetParams::init(2, 32, &mut rng);
        assert_eq!(p.w_ih.len(), 128 * 2);
        assert_eq!(p.w_hh.len(), 128 * 32);
        assert!(p.b[32..64].iter().all(|&b| b == 1.0));
        assert!(p.b[..32].iter().all(|&b| b == 0.0));
        let bound = 1.0 / 2f64.sqrt();
        assert!(p.w_ih.iter().all(|w| w.abs() <= bound));
        assert!(p.gamma.iter().all(|&g| g == 1.0));
    }

    #[test]
    fn learns_separable_toy_set() {
        let mut rng = rng_from_seed(11);
        let samples: Vec<(Vec<f64>, f64)> = (0..200)
            .map(|i| {
                let label = (i % 2) as f64;
                let shift = if label > 0.5 { 0.5 } else { -0.5 };
                let seq: Vec<f64> = (0..10).flat_map(|_| [shift + rng.random_range(-0.2..0.2), 0.0]).collect();
                (seq, label)
            })
            .collect();
        let mut p = NetParams::init(2, 8, &mut rng);
        let cfg = TrainConfig {
            epochs: 32,
            batch_size: 32,
            adam: AdamConfig {
                lr: 1e-2,
                ..AdamConfig::default()
            },
            early_stop_loss: 0.0,
        };
        let s = train(&mut p, &samples, &cfg, &mut rng).unwrap();
        assert_eq!(s.optimizer_steps, 32 * 7);
        let correct = samples
            .iter()
            .filter(|(seq, y)| (predict_logit(&p, seq).unwrap() > 0.0) == (*y > 0.5))
            .count();
        assert_eq!(correct, 200);
    }
}
