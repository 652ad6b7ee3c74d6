//! Dense feed-forward network with sigmoid hidden layers and a linear scalar
//! output, plus exact input derivatives and parameter gradients.
//!
//! Input derivatives are propagated forward layer by layer as extra
//! "channels": channel 0 carries values, channels `1..=d` carry first
//! derivatives and the remaining ones carry the upper triangle of the
//! Hessian. Parameter gradients come from a hand-written reverse pass over
//! that augmented forward computation, so losses may depend on `value`,
//! `grad_x` and `hess_x` alike.
//!
//! Points are processed in fixed-size lanes so the inner loops vectorize;
//! the summation order is fixed, which makes results bitwise reproducible.

use alloc::vec;
use alloc::vec::Vec;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::geometry::Point;
use crate::objective::{LossAccumulator, NetEval, Sample};
use crate::quadrature::pairwise_sum;
use crate::simd::{exp_approx, F8};

const LANES: usize = 64;
type Row = [f64; LANES];
const ZERO_ROW: Row = [0.0; LANES];

/// Hidden-layer nonlinearity. The output layer is always linear.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum Activation {
    #[default]
    Sigmoid,
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum NetError {
    #[error("input dimension must be 1 or 2, got {0}")]
    InputDim(usize),
    #[error("hidden layer sizes must be positive")]
    EmptyLayer,
    #[error("expected {expected} parameters, got {got}")]
    ParamCount { expected: usize, got: usize },
}

/// `N(x; W, b) = G o Phi_l o ... o Phi_1 (x)`.
///
/// Parameters live in one flat vector, layer by layer: the weight matrix
/// `W_i` (shape `N_{i-1} x N_i`, row-major) followed by the bias `b_i`.
#[derive(Clone, Debug, PartialEq)]
pub struct MlpNet {
    sizes: Vec<usize>,
    params: Vec<f64>,
    activation: Activation,
}

/// `sum_{i=1}^{l+1} (N_{i-1} + 1) N_i` with `N_0 = input_dim`, `N_{l+1} = 1`.
pub fn count_params(input_dim: usize, hidden: &[usize]) -> usize {
    let mut sizes = vec![input_dim];
    sizes.extend_from_slice(hidden);
    sizes.push(1);
    sizes.windows(2).map(|w| (w[0] + 1) * w[1]).sum()
}

fn channel_count(dim: usize, order: usize) -> usize {
    match order {
        0 => 1,
        1 => 1 + dim,
        _ => 1 + dim + dim * (dim + 1) / 2,
    }
}

/// Upper-triangle Hessian entries in channel order.
fn hessian_pairs(dim: usize) -> &'static [(usize, usize)] {
    if dim == 1 {
        &[(0, 0)]
    } else {
        &[(0, 0), (0, 1), (1, 1)]
    }
}

#[inline(always)]
fn sigmoid(z: f64) -> f64 {
    1.0 / (1.0 + exp_approx(-z))
}

/// Splits `0..n` into register blocks of 5, 4 or 1 rows.
fn row_blocks(n: usize) -> impl Iterator<Item = (usize, usize)> {
    let five = if n % 5 == 0 { n / 5 } else { 0 };
    let rest = n - 5 * five;
    let four = rest / 4;
    (0..five)
        .map(|b| (5 * b, 5))
        .chain((0..four).map(move |b| (5 * five + 4 * b, 4)))
        .chain((5 * five + 4 * four..n).map(|o| (o, 1)))
}

/// `out[o - o0] = bias[o] + sum_i coef[o * so + i * si] * inp[i]` for the
/// `j` rows starting at `o0`, lane by lane.
#[allow(clippy::too_many_arguments)]
fn mat_rows(coef: &[f64], so: usize, si: usize, inp: &[Row], out: &mut [Row], o0: usize, j: usize, bias: Option<&[f64]>) {
    match j {
        5 => mat_block::<5>(coef, so, si, inp, out, o0, bias),
        4 => mat_block::<4>(coef, so, si, inp, out, o0, bias),
        _ => mat_block::<1>(coef, so, si, inp, out, o0, bias),
    }
}

#[inline(always)]
fn mat_block<const J: usize>(coef: &[f64], so: usize, si: usize, inp: &[Row], out: &mut [Row], o0: usize, bias: Option<&[f64]>) {
    const V: usize = 2;
    for lb in 0..LANES / (8 * V) {
        let base = lb * 8 * V;
        let mut acc = [[F8::zero(); V]; J];
        if let Some(b) = bias {
            for jj in 0..J {
                acc[jj] = [F8::splat(b[o0 + jj]); V];
            }
        }
        for (i, row) in inp.iter().enumerate() {
            let x: [F8; V] = core::array::from_fn(|v| F8::load(&row[base + 8 * v..]));
            for jj in 0..J {
                let c = F8::splat(coef[(o0 + jj) * so + i * si]);
                for v in 0..V {
                    acc[jj][v] = c.mul_add(x[v], acc[jj][v]);
                }
            }
        }
        for jj in 0..J {
            for v in 0..V {
                acc[jj][v].store(&mut out[jj][base + 8 * v..]);
            }
        }
    }
}

/// `g[r * n_out + j] += sum_c sum_lanes prev[c * n_in + r] * zbar[c * n_out + j]`.
fn weight_grad(prev: &[Row], n_in: usize, zbar: &[Row], n_out: usize, nc: usize, g: &mut [f64]) {
    let mut r = 0;
    while r + 2 <= n_in {
        weight_grad_rows::<2>(prev, n_in, zbar, n_out, nc, r, g);
        r += 2;
    }
    while r < n_in {
        weight_grad_rows::<1>(prev, n_in, zbar, n_out, nc, r, g);
        r += 1;
    }
}

#[inline(always)]
fn weight_grad_rows<const R: usize>(prev: &[Row], n_in: usize, zbar: &[Row], n_out: usize, nc: usize, r0: usize, g: &mut [f64]) {
    let mut j = 0;
    if n_out % 5 == 0 {
        while j < n_out {
            weight_grad_block::<R, 5>(prev, n_in, zbar, n_out, nc, r0, j, g);
            j += 5;
        }
    }
    while j + 4 <= n_out {
        weight_grad_block::<R, 4>(prev, n_in, zbar, n_out, nc, r0, j, g);
        j += 4;
    }
    while j < n_out {
        weight_grad_block::<R, 1>(prev, n_in, zbar, n_out, nc, r0, j, g);
        j += 1;
    }
}

#[inline(always)]
#[allow(clippy::too_many_arguments)]
fn weight_grad_block<const R: usize, const J: usize>(
    prev: &[Row],
    n_in: usize,
    zbar: &[Row],
    n_out: usize,
    nc: usize,
    r0: usize,
    j0: usize,
    g: &mut [f64],
) {
    let mut acc = [[F8::zero(); J]; R];
    for c in 0..nc {
        for lb in 0..LANES / 8 {
            let x: [F8; R] = core::array::from_fn(|rr| F8::load(&prev[c * n_in + r0 + rr][lb * 8..]));
            for jj in 0..J {
                let z = F8::load(&zbar[c * n_out + j0 + jj][lb * 8..]);
                for rr in 0..R {
                    acc[rr][jj] = x[rr].mul_add(z, acc[rr][jj]);
                }
            }
        }
    }
    for rr in 0..R {
        for jj in 0..J {
            g[(r0 + rr) * n_out + j0 + jj] += acc[rr][jj].sum();
        }
    }
}

fn row_sum(x: &Row) -> f64 {
    let mut acc = F8::zero();
    let one = F8::splat(1.0);
    for lb in 0..LANES / 8 {
        acc = F8::load(&x[lb * 8..]).mul_add(one, acc);
    }
    acc.sum()
}

impl MlpNet {
    /// Glorot-uniform weights, zero biases, deterministic in `seed`.
    pub fn new(input_dim: usize, hidden: &[usize], seed: u64) -> Result<Self, NetError> {
        let mut net = Self::zeros(input_dim, hidden)?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for layer in 0..net.num_layers() {
            let (n_in, n_out) = (net.sizes[layer], net.sizes[layer + 1]);
            let limit = libm::sqrt(6.0 / (n_in + n_out) as f64);
            let (w, _) = net.layer_range(layer);
            for p in &mut net.params[w] {
                *p = rng.gen_range(-limit..limit);
            }
        }
        Ok(net)
    }

    /// All parameters zero.
    pub fn zeros(input_dim: usize, hidden: &[usize]) -> Result<Self, NetError> {
        if input_dim != 1 && input_dim != 2 {
            return Err(NetError::InputDim(input_dim));
        }
        if hidden.iter().any(|&n| n == 0) {
            return Err(NetError::EmptyLayer);
        }
        let mut sizes = vec![input_dim];
        sizes.extend_from_slice(hidden);
        sizes.push(1);
        let n = count_params(input_dim, hidden);
        Ok(MlpNet { sizes, params: vec![0.0; n], activation: Activation::Sigmoid })
    }

    pub fn from_params(input_dim: usize, hidden: &[usize], params: Vec<f64>) -> Result<Self, NetError> {
        let mut net = Self::zeros(input_dim, hidden)?;
        if params.len() != net.params.len() {
            return Err(NetError::ParamCount { expected: net.params.len(), got: params.len() });
        }
        net.params = params;
        Ok(net)
    }

    pub fn input_dim(&self) -> usize {
        self.sizes[0]
    }

    pub fn hidden_sizes(&self) -> &[usize] {
        &self.sizes[1..self.sizes.len() - 1]
    }

    /// `[N_0, N_1, ..., N_l, 1]`
    pub fn layer_sizes(&self) -> &[usize] {
        &self.sizes
    }

    pub fn activation(&self) -> Activation {
        self.activation
    }

    /// Number of affine maps, hidden layers plus the output layer.
    pub fn num_layers(&self) -> usize {
        self.sizes.len() - 1
    }

    pub fn count_params(&self) -> usize {
        self.params.len()
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [f64] {
        &mut self.params
    }

    /// Index ranges of `W_i` and `b_i` inside the flat parameter vector.
    pub fn layer_range(&self, layer: usize) -> (core::ops::Range<usize>, core::ops::Range<usize>) {
        let mut off = 0;
        for l in 0..layer {
            off += (self.sizes[l] + 1) * self.sizes[l + 1];
        }
        let w = self.sizes[layer] * self.sizes[layer + 1];
        (off..off + w, off + w..off + w + self.sizes[layer + 1])
    }

    pub fn weights(&self, layer: usize) -> &[f64] {
        &self.params[self.layer_range(layer).0]
    }

    pub fn bias(&self, layer: usize) -> &[f64] {
        &self.params[self.layer_range(layer).1]
    }

    /// Value and input derivatives up to `order` (0, 1 or 2) at one point.
    pub fn eval(&self, x: &Point, order: usize) -> NetEval {
        let mut ws = Workspace::new(self);
        let mut out = [NetEval::default()];
        ws.forward(self, core::slice::from_ref(x), order.min(2));
        ws.read_outputs(self.input_dim(), order.min(2), &mut out);
        out[0]
    }

    /// [`eval`](Self::eval) over many points.
    pub fn eval_many(&self, points: &[Point], order: usize) -> Vec<NetEval> {
        let mut ws = Workspace::new(self);
        let mut out = vec![NetEval::default(); points.len()];
        for (pts, dst) in points.chunks(LANES).zip(out.chunks_mut(LANES)) {
            ws.forward(self, pts, order.min(2));
            ws.read_outputs(self.input_dim(), order.min(2), dst);
        }
        out
    }

    /// Total loss of the accumulator, forward pass only.
    pub fn loss(&self, acc: &LossAccumulator) -> f64 {
        let mut ws = Workspace::new(self);
        let mut partial = Vec::new();
        for_each_batch(&acc.samples, |batch, order| {
            ws.forward(self, &batch.iter().map(|s| s.point).collect::<Vec<_>>(), order);
            let mut evals = [NetEval::default(); LANES];
            ws.read_outputs(self.input_dim(), order, &mut evals[..batch.len()]);
            // same order as seed_adjoints, so both entry points agree bitwise
            let mut sum = 0.0;
            for (s, f) in batch.iter().zip(evals.iter()) {
                sum += s.term.evaluate(s.weight, acc.dim, f).loss;
            }
            partial.push(sum);
        });
        pairwise_sum(&partial)
    }

    /// Loss and its exact gradient with respect to every parameter.
    pub fn loss_gradient(&self, acc: &LossAccumulator) -> (f64, Vec<f64>) {
        let mut ws = Workspace::new(self);
        let mut grad = vec![0.0; self.params.len()];
        let loss = self.loss_gradient_into(acc, &mut ws, &mut grad);
        (loss, grad)
    }

    /// Like [`loss_gradient`](Self::loss_gradient) with caller-owned buffers.
    /// `grad` is overwritten.
    pub fn loss_gradient_into(&self, acc: &LossAccumulator, ws: &mut Workspace, grad: &mut [f64]) -> f64 {
        assert_eq!(grad.len(), self.params.len());
        grad.fill(0.0);
        let mut partial = Vec::new();
        let mut points = [Point::new1(0.0); LANES];
        for_each_batch(&acc.samples, |batch, order| {
            for (dst, s) in points.iter_mut().zip(batch) {
                *dst = s.point;
            }
            ws.forward(self, &points[..batch.len()], order);
            partial.push(ws.seed_adjoints(acc.dim, order, batch));
            ws.backward(self, order, grad);
        });
        pairwise_sum(&partial)
    }
}

/// Splits samples into lane-sized batches of uniform derivative order.
fn for_each_batch(samples: &[Sample], mut f: impl FnMut(&[Sample], usize)) {
    let mut start = 0;
    while start < samples.len() {
        let order = samples[start].term.order();
        let mut end = start + 1;
        while end < samples.len() && end - start < LANES && samples[end].term.order() == order {
            end += 1;
        }
        f(&samples[start..end], order);
        start = end;
    }
}

struct LayerState {
    /// pre-activation channels, `channels x n_out` rows
    z: Vec<Row>,
    /// post-activation channels (hidden layers only)
    a: Vec<Row>,
    /// first three sigmoid derivatives, `n_out` rows each
    s: [Vec<Row>; 3],
}

fn activate(state: &mut LayerState, n_out: usize, j: usize, d: usize, order: usize) {
    let LayerState { z, a, s } = state;
    let [s1, s2, s3] = s;
    let zr = &z[j];
    let (a0, r1, r2, r3) = (&mut a[j], &mut s1[j], &mut s2[j], &mut s3[j]);
    match order {
        0 => {
            for b in 0..LANES {
                let sg = sigmoid(zr[b]);
                a0[b] = sg;
                r1[b] = sg * (1.0 - sg);
            }
        }
        1 => {
            for b in 0..LANES {
                let sg = sigmoid(zr[b]);
                let d1 = sg * (1.0 - sg);
                a0[b] = sg;
                r1[b] = d1;
                r2[b] = d1 * (1.0 - 2.0 * sg);
            }
        }
        _ => {
            for b in 0..LANES {
                let sg = sigmoid(zr[b]);
                let d1 = sg * (1.0 - sg);
                let d2 = d1 * (1.0 - 2.0 * sg);
                a0[b] = sg;
                r1[b] = d1;
                r2[b] = d2;
                r3[b] = d2 * (1.0 - 2.0 * sg) - 2.0 * d1 * d1;
            }
        }
    }
    let (r1, r2) = (&s1[j], &s2[j]);
    if order >= 1 {
        for k in 0..d {
            let zk = &z[(1 + k) * n_out + j];
            let dst = &mut a[(1 + k) * n_out + j];
            for b in 0..LANES {
                dst[b] = r1[b] * zk[b];
            }
        }
    }
    if order >= 2 {
        for (p, &(k, m)) in hessian_pairs(d).iter().enumerate() {
            let c = 1 + d + p;
            let (zk, zm, zp) = (&z[(1 + k) * n_out + j], &z[(1 + m) * n_out + j], &z[c * n_out + j]);
            let dst = &mut a[c * n_out + j];
            for b in 0..LANES {
                dst[b] = r2[b] * zk[b] * zm[b] + r1[b] * zp[b];
            }
        }
    }
}

/// Adjoint of [`activate`] for neuron `j`: `abar` rows to `zbar` rows.
fn activate_adjoint(state: &LayerState, n: usize, j: usize, d: usize, order: usize, abar: &[Row], zbar: &mut [Row]) {
    let [s1, s2, s3] = &state.s;
    let z = &state.z;
    let mut zb0 = ZERO_ROW;
    let ab0 = &abar[j];
    for b in 0..LANES {
        zb0[b] = ab0[b] * s1[j][b];
    }
    if order >= 1 {
        for k in 0..d {
            let abk = &abar[(1 + k) * n + j];
            let zk = &z[(1 + k) * n + j];
            let zbk = &mut zbar[(1 + k) * n + j];
            for b in 0..LANES {
                zb0[b] += abk[b] * s2[j][b] * zk[b];
                zbk[b] = abk[b] * s1[j][b];
            }
        }
    }
    if order >= 2 {
        for (p, &(k, m)) in hessian_pairs(d).iter().enumerate() {
            let c = 1 + d + p;
            let abp = &abar[c * n + j];
            let zk = &z[(1 + k) * n + j];
            let zm = &z[(1 + m) * n + j];
            let zp = &z[c * n + j];
            let zbp = &mut zbar[c * n + j];
            for b in 0..LANES {
                zb0[b] += abp[b] * (s3[j][b] * zk[b] * zm[b] + s2[j][b] * zp[b]);
                zbp[b] = abp[b] * s1[j][b];
            }
            let (zbk_idx, zbm_idx) = ((1 + k) * n + j, (1 + m) * n + j);
            for b in 0..LANES {
                let t = abp[b] * s2[j][b];
                zbar[zbk_idx][b] += t * zm[b];
                zbar[zbm_idx][b] += t * zk[b];
            }
        }
    }
    zbar[j] = zb0;
}

/// Scratch buffers for batched evaluation; reuse across calls to avoid allocation.
pub struct Workspace {
    input: Vec<Row>,
    layers: Vec<LayerState>,
    out_adj: Vec<Row>,
    abar: Vec<Row>,
    zbar: Vec<Row>,
    zbar_next: Vec<Row>,
    channels: usize,
    batch: usize,
}

impl Workspace {
    pub fn new(net: &MlpNet) -> Self {
        let d = net.input_dim();
        let cmax = channel_count(d, 2);
        let widest = net.sizes.iter().copied().max().unwrap_or(1);
        let layers = (0..net.num_layers())
            .map(|l| {
                let n = net.sizes[l + 1];
                LayerState {
                    z: vec![ZERO_ROW; cmax * n],
                    a: vec![ZERO_ROW; cmax * n],
                    s: [vec![ZERO_ROW; n], vec![ZERO_ROW; n], vec![ZERO_ROW; n]],
                }
            })
            .collect();
        Workspace {
            input: vec![ZERO_ROW; cmax * d],
            layers,
            out_adj: vec![ZERO_ROW; cmax],
            abar: vec![ZERO_ROW; cmax * widest],
            zbar: vec![ZERO_ROW; cmax * widest],
            zbar_next: vec![ZERO_ROW; cmax * widest],
            channels: 1,
            batch: 0,
        }
    }

    fn forward(&mut self, net: &MlpNet, points: &[Point], order: usize) {
        let d = net.input_dim();
        let nc = channel_count(d, order);
        self.channels = nc;
        self.batch = points.len();
        debug_assert!(points.len() <= LANES);

        for r in &mut self.input[..nc * d] {
            *r = ZERO_ROW;
        }
        for (b, p) in points.iter().enumerate() {
            for k in 0..d {
                self.input[k][b] = p.coords[k];
            }
        }
        if order >= 1 {
            // d x_k / d x_k = 1; padded lanes carry zero adjoints so the ones are harmless
            for k in 0..d {
                self.input[(1 + k) * d + k] = [1.0; LANES];
            }
        }

        let last = net.num_layers() - 1;
        for l in 0..=last {
            let n_in = net.sizes[l];
            let n_out = net.sizes[l + 1];
            let (wr, br) = net.layer_range(l);
            let w = &net.params[wr];
            let bias = &net.params[br];
            let (before, rest) = self.layers.split_at_mut(l);
            let state = &mut rest[0];
            let prev: &[Row] = if l == 0 { &self.input } else { &before[l - 1].a };

            if l == last {
                for c in 0..nc {
                    let b = if c == 0 { Some(bias) } else { None };
                    mat_rows(w, 1, n_out, &prev[c * n_in..(c + 1) * n_in], &mut state.z[c * n_out..], 0, 1, b);
                }
                continue;
            }
            // a block of neurons at a time, so the activation reads z while it is hot
            for (o0, jn) in row_blocks(n_out) {
                for c in 0..nc {
                    let b = if c == 0 { Some(bias) } else { None };
                    mat_rows(w, 1, n_out, &prev[c * n_in..(c + 1) * n_in], &mut state.z[c * n_out + o0..], o0, jn, b);
                }
                for j in o0..o0 + jn {
                    activate(state, n_out, j, d, order);
                }
            }
        }
    }

    fn output(&self, c: usize) -> &Row {
        &self.layers.last().expect("at least one layer").z[c]
    }

    fn read_outputs(&self, d: usize, order: usize, out: &mut [NetEval]) {
        for (b, e) in out.iter_mut().enumerate().take(self.batch) {
            e.value = self.output(0)[b];
            if order >= 1 {
                for k in 0..d {
                    e.grad[k] = self.output(1 + k)[b];
                }
            }
            if order >= 2 {
                for (p, &(k, m)) in hessian_pairs(d).iter().enumerate() {
                    let h = self.output(1 + d + p)[b];
                    e.hess[k][m] = h;
                    e.hess[m][k] = h;
                }
            }
        }
    }

    /// Evaluates the terms on the current batch, stores output adjoints and
    /// returns the batch loss.
    fn seed_adjoints(&mut self, d: usize, order: usize, batch: &[Sample]) -> f64 {
        let nc = self.channels;
        for r in &mut self.out_adj[..nc] {
            *r = ZERO_ROW;
        }
        let mut evals = [NetEval::default(); LANES];
        self.read_outputs(d, order, &mut evals[..batch.len()]);
        let mut loss = 0.0;
        for (b, (s, f)) in batch.iter().zip(evals.iter()).enumerate() {
            let adj = s.term.evaluate(s.weight, d, f);
            loss += adj.loss;
            self.out_adj[0][b] = adj.value;
            if order >= 1 {
                for k in 0..d {
                    self.out_adj[1 + k][b] = adj.grad[k];
                }
            }
            if order >= 2 {
                for (p, &(k, m)) in hessian_pairs(d).iter().enumerate() {
                    let a = if k == m { adj.hess[k][k] } else { adj.hess[k][m] + adj.hess[m][k] };
                    self.out_adj[1 + d + p][b] = a;
                }
            }
        }
        loss
    }

    fn backward(&mut self, net: &MlpNet, order: usize, grad: &mut [f64]) {
        let d = net.input_dim();
        let nc = self.channels;
        let last = net.num_layers() - 1;

        // z-adjoints of the linear output layer are the output adjoints themselves
        for c in 0..nc {
            self.zbar[c] = self.out_adj[c];
        }

        for l in (0..=last).rev() {
            let n_in = net.sizes[l];
            let n_out = net.sizes[l + 1];
            let (wr, br) = net.layer_range(l);
            let w = &net.params[wr.clone()];
            let prev: &[Row] = if l == 0 { &self.input } else { &self.layers[l - 1].a };

            weight_grad(prev, n_in, &self.zbar, n_out, nc, &mut grad[wr]);
            let gb = &mut grad[br];
            for j in 0..n_out {
                gb[j] += row_sum(&self.zbar[j]);
            }
            if l == 0 {
                break;
            }

            // a-adjoints of the previous layer, then through its activation
            let state = &self.layers[l - 1];
            for (r0, jn) in row_blocks(n_in) {
                for c in 0..nc {
                    mat_rows(w, n_out, 1, &self.zbar[c * n_out..(c + 1) * n_out], &mut self.abar[c * n_in + r0..], r0, jn, None);
                }
                for j in r0..r0 + jn {
                    activate_adjoint(state, n_in, j, d, order, &self.abar, &mut self.zbar_next);
                }
            }
            core::mem::swap(&mut self.zbar, &mut self.zbar_next);
        }
    }
}
