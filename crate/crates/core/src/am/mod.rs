//! A small bidirectional GRU acoustic model with a hand-written backward pass.
//!
//! Parameters live in one flat vector; [`ModelParams::tensors`] names the ranges in
//! their fixed declaration order, which is also the checkpoint order.

use alloc::vec;
use alloc::vec::Vec;
use core::ops::Range;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::loss::{LossReport, Objective};
use crate::math::{sigmoid, sqrt, tanh};
use crate::topology::LabelSeq;
use crate::{Error, FrameLogits, Matrix, Result};

mod optim;

pub use optim::{clip_scale, optimizer_step, OptimState, StepInfo, DEFAULT_CLIP_NORM, DEFAULT_LR};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ModelDims {
    pub d_in: usize,
    pub d_h: usize,
    /// Emission symbols: labels plus blank.
    pub num_outputs: usize,
}

/// Gate order inside the per-direction tensors.
const Z: usize = 0;
const R: usize = 1;
const N: usize = 2;

#[derive(Debug, Clone, Copy)]
struct GruOffsets {
    w: [usize; 3],
    u: [usize; 3],
    b: [usize; 3],
}

#[derive(Debug, Clone, Copy)]
struct Offsets {
    w_in: usize,
    b_in: usize,
    dirs: [GruOffsets; 2],
    w_out: usize,
    b_out: usize,
    total: usize,
}

impl Offsets {
    fn new(d: ModelDims) -> Self {
        let mut at = 0;
        let mut take = |n: usize| {
            let o = at;
            at += n;
            o
        };
        let w_in = take(d.d_in * d.d_h);
        let b_in = take(d.d_h);
        let mut dir = || {
            let w = [take(d.d_h * d.d_h), take(d.d_h * d.d_h), take(d.d_h * d.d_h)];
            let u = [take(d.d_h * d.d_h), take(d.d_h * d.d_h), take(d.d_h * d.d_h)];
            let b = [take(d.d_h), take(d.d_h), take(d.d_h)];
            GruOffsets { w, u, b }
        };
        let dirs = [dir(), dir()];
        let w_out = take(2 * d.d_h * d.num_outputs);
        let b_out = take(d.num_outputs);
        Self {
            w_in,
            b_in,
            dirs,
            w_out,
            b_out,
            total: at,
        }
    }
}

/// Named parameter tensor: `(name, rows, cols)` and its range in the flat vector.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TensorInfo {
    pub name: &'static str,
    pub rows: usize,
    pub cols: usize,
    pub range: Range<usize>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModelParams {
    dims: ModelDims,
    data: Vec<f64>,
}

const DIR_NAMES: [[&str; 9]; 2] = [
    [
        "fwd.w_z", "fwd.w_r", "fwd.w_n", "fwd.u_z", "fwd.u_r", "fwd.u_n", "fwd.b_z", "fwd.b_r",
        "fwd.b_n",
    ],
    [
        "bwd.w_z", "bwd.w_r", "bwd.w_n", "bwd.u_z", "bwd.u_r", "bwd.u_n", "bwd.b_z", "bwd.b_r",
        "bwd.b_n",
    ],
];

impl ModelParams {
    pub fn zeros(dims: ModelDims) -> Self {
        Self {
            dims,
            data: vec![0.0; Offsets::new(dims).total],
        }
    }

    /// Uniform in `±1/sqrt(fan_in)` per tensor, from a seeded ChaCha stream.
    pub fn init(dims: ModelDims, seed: u64) -> Self {
        let mut p = Self::zeros(dims);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for t in p.tensors() {
            let fan_in = if t.rows == 1 {
                // biases share the fan-in of the weights feeding the same units
                match t.name {
                    "b_in" => dims.d_in,
                    "b_out" => 2 * dims.d_h,
                    _ => dims.d_h,
                }
            } else {
                t.rows
            };
            let bound = 1.0 / sqrt(fan_in.max(1) as f64);
            for v in &mut p.data[t.range] {
                *v = rng.random_range(-bound..bound);
            }
        }
        p
    }

    pub fn from_vec(dims: ModelDims, data: Vec<f64>) -> Result<Self> {
        let want = Offsets::new(dims).total;
        if data.len() != want {
            return Err(Error::Shape(alloc::format!(
                "{} parameters for dims needing {want}",
                data.len()
            )));
        }
        Ok(Self { dims, data })
    }

    pub fn dims(&self) -> ModelDims {
        self.dims
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    /// Tensors in declaration order.
    pub fn tensors(&self) -> Vec<TensorInfo> {
        let d = self.dims;
        let o = Offsets::new(d);
        let mut out = vec![
            TensorInfo {
                name: "w_in",
                rows: d.d_in,
                cols: d.d_h,
                range: o.w_in..o.w_in + d.d_in * d.d_h,
            },
            TensorInfo {
                name: "b_in",
                rows: 1,
                cols: d.d_h,
                range: o.b_in..o.b_in + d.d_h,
            },
        ];
        for (dir, names) in o.dirs.iter().zip(DIR_NAMES) {
            let starts = [dir.w[0], dir.w[1], dir.w[2], dir.u[0], dir.u[1], dir.u[2]];
            for (i, s) in starts.into_iter().enumerate() {
                out.push(TensorInfo {
                    name: names[i],
                    rows: d.d_h,
                    cols: d.d_h,
                    range: s..s + d.d_h * d.d_h,
                });
            }
            for (i, s) in dir.b.into_iter().enumerate() {
                out.push(TensorInfo {
                    name: names[6 + i],
                    rows: 1,
                    cols: d.d_h,
                    range: s..s + d.d_h,
                });
            }
        }
        out.push(TensorInfo {
            name: "w_out",
            rows: 2 * d.d_h,
            cols: d.num_outputs,
            range: o.w_out..o.w_out + 2 * d.d_h * d.num_outputs,
        });
        out.push(TensorInfo {
            name: "b_out",
            rows: 1,
            cols: d.num_outputs,
            range: o.b_out..o.b_out + d.num_outputs,
        });
        out
    }

    pub fn tensor(&self, name: &str) -> Option<&[f64]> {
        self.tensors()
            .into_iter()
            .find(|t| t.name == name)
            .map(|t| &self.data[t.range])
    }

    pub fn tensor_mut(&mut self, name: &str) -> Option<&mut [f64]> {
        let range = self.tensors().into_iter().find(|t| t.name == name)?.range;
        Some(&mut self.data[range])
    }

    /// `self += scale * other`.
    pub fn add_scaled(&mut self, other: &ModelParams, scale: f64) {
        assert_eq!(self.dims, other.dims, "parameter shapes differ");
        for (a, b) in self.data.iter_mut().zip(&other.data) {
            *a += scale * b;
        }
    }

    /// FNV-1a over the parameter bit patterns; ties a forward cache to its weights.
    fn fingerprint(&self) -> u64 {
        let mut h: u64 = 0xcbf2_9ce4_8422_2325;
        for v in &self.data {
            for byte in v.to_bits().to_le_bytes() {
                h ^= byte as u64;
                h = h.wrapping_mul(0x0100_0000_01b3);
            }
        }
        h
    }
}

/// Per-frame hidden states: row `t` holds the forward then the backward state.
#[derive(Debug, Clone, PartialEq)]
pub struct HiddenTrace {
    states: Matrix,
}

impl HiddenTrace {
    pub fn new(states: Matrix) -> Self {
        Self { states }
    }

    pub fn frames(&self) -> usize {
        self.states.rows()
    }

    pub fn as_matrix(&self) -> &Matrix {
        &self.states
    }

    pub fn into_matrix(self) -> Matrix {
        self.states
    }

    pub fn forward_state(&self, t: usize) -> &[f64] {
        let d_h = self.states.cols() / 2;
        &self.states.row(t)[..d_h]
    }

    pub fn backward_state(&self, t: usize) -> &[f64] {
        let d_h = self.states.cols() / 2;
        &self.states.row(t)[d_h..]
    }
}

/// Recurrent state handed to the first step of each direction.
#[derive(Debug, Clone, PartialEq)]
pub struct InitialState {
    pub forward: Vec<f64>,
    pub backward: Vec<f64>,
}

#[derive(Debug, Clone)]
struct DirCache {
    h_prev: Vec<f64>,
    z: Vec<f64>,
    r: Vec<f64>,
    n: Vec<f64>,
}

/// Everything the backward pass needs from a forward pass.
#[derive(Debug, Clone)]
pub struct AmCache {
    fingerprint: u64,
    features: Matrix,
    proj: Matrix,
    dirs: [DirCache; 2],
    hidden: Matrix,
}

impl AmCache {
    pub fn frames(&self) -> usize {
        self.features.rows()
    }
}

#[inline]
fn affine_acc(y: &mut [f64], x: &[f64], w: &[f64]) {
    let cols = y.len();
    for (i, &xi) in x.iter().enumerate() {
        if xi == 0.0 {
            continue;
        }
        for (yj, wij) in y.iter_mut().zip(&w[i * cols..(i + 1) * cols]) {
            *yj += xi * wij;
        }
    }
}

#[inline]
fn outer_acc(dw: &mut [f64], x: &[f64], dy: &[f64]) {
    let cols = dy.len();
    for (i, &xi) in x.iter().enumerate() {
        for (d, g) in dw[i * cols..(i + 1) * cols].iter_mut().zip(dy) {
            *d += xi * g;
        }
    }
}

#[inline]
fn back_acc(dx: &mut [f64], w: &[f64], dy: &[f64]) {
    let cols = dy.len();
    for (i, d) in dx.iter_mut().enumerate() {
        *d += w[i * cols..(i + 1) * cols]
            .iter()
            .zip(dy)
            .map(|(a, b)| a * b)
            .sum::<f64>();
    }
}

/// Runs the network over `features` (`T x d_in`). Missing initial states are zeros.
pub fn am_forward(
    params: &ModelParams,
    features: &Matrix,
    initial: Option<&InitialState>,
) -> Result<(FrameLogits, HiddenTrace, AmCache)> {
    let d = params.dims;
    if features.cols() != d.d_in {
        return Err(Error::Shape(alloc::format!(
            "feature width {} != d_in {}",
            features.cols(),
            d.d_in
        )));
    }
    if let Some(init) = initial {
        if init.forward.len() != d.d_h || init.backward.len() != d.d_h {
            return Err(Error::Shape("initial state width != d_h".into()));
        }
    }
    let o = Offsets::new(d);
    let p = &params.data;
    let frames = features.rows();
    let h = d.d_h;

    let mut proj = Matrix::zeros(frames, h);
    for t in 0..frames {
        let row = proj.row_mut(t);
        row.copy_from_slice(&p[o.b_in..o.b_in + h]);
        affine_acc(row, features.row(t), &p[o.w_in..o.w_in + d.d_in * h]);
    }

    let mut hidden = Matrix::zeros(frames, 2 * h);
    let mut caches = Vec::with_capacity(2);
    for (dir, g) in o.dirs.iter().enumerate() {
        let mut cache = DirCache {
            h_prev: vec![0.0; frames * h],
            z: vec![0.0; frames * h],
            r: vec![0.0; frames * h],
            n: vec![0.0; frames * h],
        };
        let mut state = match (initial, dir) {
            (Some(i), 0) => i.forward.clone(),
            (Some(i), _) => i.backward.clone(),
            (None, _) => vec![0.0; h],
        };
        let mut a = [vec![0.0; h], vec![0.0; h], vec![0.0; h]];
        let mut rh = vec![0.0; h];
        for step in 0..frames {
            let t = if dir == 0 { step } else { frames - 1 - step };
            let x = proj.row(t);
            for gate in [Z, R, N] {
                a[gate].copy_from_slice(&p[g.b[gate]..g.b[gate] + h]);
                affine_acc(&mut a[gate], x, &p[g.w[gate]..g.w[gate] + h * h]);
            }
            affine_acc(&mut a[Z], &state, &p[g.u[Z]..g.u[Z] + h * h]);
            affine_acc(&mut a[R], &state, &p[g.u[R]..g.u[R] + h * h]);
            let span = t * h..(t + 1) * h;
            for j in 0..h {
                cache.z[span.start + j] = sigmoid(a[Z][j]);
                cache.r[span.start + j] = sigmoid(a[R][j]);
                rh[j] = cache.r[span.start + j] * state[j];
            }
            affine_acc(&mut a[N], &rh, &p[g.u[N]..g.u[N] + h * h]);
            cache.h_prev[span.clone()].copy_from_slice(&state);
            for j in 0..h {
                let n = tanh(a[N][j]);
                let z = cache.z[span.start + j];
                cache.n[span.start + j] = n;
                state[j] = (1.0 - z) * n + z * state[j];
            }
            hidden.row_mut(t)[dir * h..(dir + 1) * h].copy_from_slice(&state);
        }
        caches.push(cache);
    }

    let s = d.num_outputs;
    let mut logits = Matrix::zeros(frames, s);
    for t in 0..frames {
        let row = logits.row_mut(t);
        row.copy_from_slice(&p[o.b_out..o.b_out + s]);
        affine_acc(row, hidden.row(t), &p[o.w_out..o.w_out + 2 * h * s]);
    }
    let bwd = caches.pop().expect("two directions");
    let fwd = caches.pop().expect("two directions");
    let cache = AmCache {
        fingerprint: params.fingerprint(),
        features: features.clone(),
        proj,
        dirs: [fwd, bwd],
        hidden: hidden.clone(),
    };
    Ok((logits, HiddenTrace::new(hidden), cache))
}

/// Exact gradient of a loss that reaches the model through `grad_logits` and,
/// optionally, through the hidden trace.
pub fn am_backward(
    params: &ModelParams,
    cache: &AmCache,
    grad_logits: &Matrix,
    grad_hidden: Option<&Matrix>,
) -> Result<ModelParams> {
    if cache.fingerprint != params.fingerprint() {
        return Err(Error::StaleCache);
    }
    let d = params.dims;
    let frames = cache.frames();
    let h = d.d_h;
    let s = d.num_outputs;
    if grad_logits.rows() != frames || grad_logits.cols() != s {
        return Err(Error::Shape("grad_logits shape".into()));
    }
    if let Some(gh) = grad_hidden {
        if gh.rows() != frames || gh.cols() != 2 * h {
            return Err(Error::Shape("grad_hidden shape".into()));
        }
    }
    let o = Offsets::new(d);
    let p = &params.data;
    let mut grads = ModelParams::zeros(d);
    let gd = &mut grads.data;

    let mut d_hidden = match grad_hidden {
        Some(gh) => gh.clone(),
        None => Matrix::zeros(frames, 2 * h),
    };
    for t in 0..frames {
        let dy = grad_logits.row(t);
        outer_acc(&mut gd[o.w_out..o.w_out + 2 * h * s], cache.hidden.row(t), dy);
        for (b, g) in gd[o.b_out..o.b_out + s].iter_mut().zip(dy) {
            *b += g;
        }
        back_acc(d_hidden.row_mut(t), &p[o.w_out..o.w_out + 2 * h * s], dy);
    }

    let mut d_proj = Matrix::zeros(frames, h);
    for (dir, g) in o.dirs.iter().enumerate() {
        let c = &cache.dirs[dir];
        let mut carry = vec![0.0; h];
        let mut dh = vec![0.0; h];
        let mut da = [vec![0.0; h], vec![0.0; h], vec![0.0; h]];
        let mut d_rh = vec![0.0; h];
        let mut rh = vec![0.0; h];
        for step in (0..frames).rev() {
            let t = if dir == 0 { step } else { frames - 1 - step };
            let span = t * h..(t + 1) * h;
            let h_prev = &c.h_prev[span.clone()];
            let (z, r, n) = (&c.z[span.clone()], &c.r[span.clone()], &c.n[span.clone()]);
            for j in 0..h {
                dh[j] = d_hidden.get(t, dir * h + j) + carry[j];
            }
            for j in 0..h {
                da[N][j] = dh[j] * (1.0 - z[j]) * (1.0 - n[j] * n[j]);
                da[Z][j] = dh[j] * (h_prev[j] - n[j]) * z[j] * (1.0 - z[j]);
                carry[j] = dh[j] * z[j];
                rh[j] = r[j] * h_prev[j];
            }
            d_rh.iter_mut().for_each(|v| *v = 0.0);
            back_acc(&mut d_rh, &p[g.u[N]..g.u[N] + h * h], &da[N]);
            outer_acc(&mut gd[g.u[N]..g.u[N] + h * h], &rh, &da[N]);
            for j in 0..h {
                da[R][j] = d_rh[j] * h_prev[j] * r[j] * (1.0 - r[j]);
                carry[j] += d_rh[j] * r[j];
            }
            let x = cache.proj.row(t);
            for gate in [Z, R, N] {
                outer_acc(&mut gd[g.w[gate]..g.w[gate] + h * h], x, &da[gate]);
                for (b, v) in gd[g.b[gate]..g.b[gate] + h].iter_mut().zip(&da[gate]) {
                    *b += v;
                }
                back_acc(d_proj.row_mut(t), &p[g.w[gate]..g.w[gate] + h * h], &da[gate]);
            }
            for gate in [Z, R] {
                outer_acc(&mut gd[g.u[gate]..g.u[gate] + h * h], h_prev, &da[gate]);
                back_acc(&mut carry, &p[g.u[gate]..g.u[gate] + h * h], &da[gate]);
            }
        }
    }

    for t in 0..frames {
        let dy = d_proj.row(t);
        outer_acc(&mut gd[o.w_in..o.w_in + d.d_in * h], cache.features.row(t), dy);
        for (b, g) in gd[o.b_in..o.b_in + h].iter_mut().zip(dy) {
            *b += g;
        }
    }
    Ok(grads)
}

/// Whole-utterance loss and parameter gradient under `objective`.
pub fn utterance_loss(
    params: &ModelParams,
    features: &Matrix,
    labels: &LabelSeq,
    objective: &Objective<'_>,
) -> Result<(LossReport, ModelParams)> {
    let (logits, _, cache) = am_forward(params, features, None)?;
    let report = objective.evaluate(&logits, labels)?;
    let grads = am_backward(params, &cache, &report.grad_logits, None)?;
    Ok((report, grads))
}
