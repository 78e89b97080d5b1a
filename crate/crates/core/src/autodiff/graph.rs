//! Define-by-run tape. Every op appends a node whose inputs already exist, so
//! node order is a topological order and backward is a single reverse sweep.

use super::kernels::{self, ConvGeom};
use super::param::{ParamId, ParamStore};
use crate::error::{invalid, Error, Result};
use crate::tensor::{Element, Tensor};

/// Handle to a node on a [`Graph`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Var(usize);

/// Probabilities below this are clamped inside the log of the cross-entropy.
pub const LOG_CLAMP: f64 = 1e-12;
/// Tolerance on target row sums accepted by [`Graph::soft_cross_entropy`].
pub const TARGET_ROW_TOL: f64 = 1e-4;

enum Op<T> {
    Leaf,
    Param(ParamId),
    Conv2d { x: Var, w: Var, b: Var, geom: ConvGeom, cols: Vec<T> },
    MaxPool { x: Var, argmax: Vec<u32> },
    Linear { x: Var, w: Var, b: Var },
    Relu { x: Var },
    Add { a: Var, b: Var },
    WeightedSum { a: Var, b: Var, weight: T },
    BatchNorm { x: Var, gamma: Var, beta: Var, xhat: Vec<T>, inv_std: Vec<T>, batch_stats: bool, dims: [usize; 3] },
    GlobalAvgPool { x: Var },
    Reshape { x: Var },
    Softmax { x: Var, t: T },
    SoftCrossEntropy { logits: Var, target: Tensor<T>, t: T },
    SumSquaredError { a: Var, b: Var },
    Sum { x: Var },
}

struct Node<T> {
    value: Tensor<T>,
    op: Op<T>,
    requires_grad: bool,
}

/// Batch-norm mode. Training normalizes with batch statistics and folds them
/// into the running buffers; inference reads the running buffers only.
pub enum BnMode<'a, T> {
    Train { running_mean: &'a mut [T], running_var: &'a mut [T], momentum: f64 },
    Infer { running_mean: &'a [T], running_var: &'a [T] },
}

pub const BN_EPS: f64 = 1e-5;
pub const BN_MOMENTUM: f64 = 0.9;

pub struct Graph<T: Element> {
    nodes: Vec<Node<T>>,
    record: bool,
}

impl<T: Element> Default for Graph<T> {
    fn default() -> Self {
        Self::new()
    }
}

impl<T: Element> Graph<T> {
    /// A recording graph: ops keep what backward needs.
    pub fn new() -> Self {
        Self { nodes: Vec::new(), record: true }
    }

    /// A non-recording graph for inference; nothing requires grad.
    pub fn inference() -> Self {
        Self { nodes: Vec::new(), record: false }
    }

    pub fn is_recording(&self) -> bool {
        self.record
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, v: Var) -> &Tensor<T> {
        &self.nodes[v.0].value
    }

    pub fn requires_grad(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    fn push(&mut self, value: Tensor<T>, op: Op<T>, inputs: &[Var]) -> Result<Var> {
        if !value.is_finite() {
            return Err(Error::NonFinite(op_name(&op).to_string()));
        }
        let requires_grad = self.record && inputs.iter().any(|v| self.nodes[v.0].requires_grad);
        let op = if requires_grad { op } else { Op::Leaf };
        self.nodes.push(Node { value, op, requires_grad });
        Ok(Var(self.nodes.len() - 1))
    }

    /// A constant input.
    pub fn input(&mut self, value: Tensor<T>) -> Var {
        self.nodes.push(Node { value, op: Op::Leaf, requires_grad: false });
        Var(self.nodes.len() - 1)
    }

    /// An input leaf whose gradient is reported by backward.
    pub fn input_with_grad(&mut self, value: Tensor<T>) -> Var {
        let requires_grad = self.record;
        self.nodes.push(Node { value, op: Op::Leaf, requires_grad });
        Var(self.nodes.len() - 1)
    }

    /// Places a copy of a stored parameter on the tape.
    pub fn param(&mut self, store: &ParamStore<T>, id: ParamId) -> Var {
        let p = store.get(id);
        let requires_grad = self.record && p.trainable;
        let op = if requires_grad { Op::Param(id) } else { Op::Leaf };
        self.nodes.push(Node { value: p.value.clone(), op, requires_grad });
        Var(self.nodes.len() - 1)
    }

    pub fn conv2d(&mut self, x: Var, w: Var, b: Var, stride: usize, padding: usize) -> Result<Var> {
        let xs = self.value(x).shape().to_vec();
        let ws = self.value(w).shape().to_vec();
        let bs = self.value(b).shape().to_vec();
        if xs.len() != 4 || ws.len() != 4 {
            return Err(Error::shape("conv2d", format!("input {xs:?} and weight {ws:?} must be rank 4")));
        }
        let (k, c_out) = (ws[2], ws[0]);
        if ws[3] != k || !(k == 1 || k == 3) {
            return Err(Error::shape("conv2d", format!("kernel must be square 1x1 or 3x3, got {ws:?}")));
        }
        if ws[1] != xs[1] {
            return Err(Error::shape("conv2d", format!("input has {} channels, weight expects {}", xs[1], ws[1])));
        }
        if bs != [c_out] {
            return Err(Error::shape("conv2d", format!("bias {bs:?} must be [{c_out}]")));
        }
        if stride == 0 {
            return Err(invalid("conv2d stride must be >= 1"));
        }
        if xs[2] + 2 * padding < k || xs[3] + 2 * padding < k {
            return Err(Error::shape("conv2d", format!("input {xs:?} smaller than kernel {k} with padding {padding}")));
        }
        let geom = ConvGeom {
            n: xs[0],
            c_in: xs[1],
            h: xs[2],
            w: xs[3],
            c_out,
            k,
            stride,
            pad: padding,
            h_out: (xs[2] + 2 * padding - k) / stride + 1,
            w_out: (xs[3] + 2 * padding - k) / stride + 1,
        };
        let (out, cols) =
            kernels::conv2d_forward(self.value(x).data(), self.value(w).data(), self.value(b).data(), &geom);
        let value = Tensor::from_parts_unchecked(vec![geom.n, c_out, geom.h_out, geom.w_out], out);
        self.push(value, Op::Conv2d { x, w, b, geom, cols }, &[x, w, b])
    }

    pub fn maxpool2d(&mut self, x: Var, k: usize, stride: usize) -> Result<Var> {
        let s = self.value(x).shape().to_vec();
        if s.len() != 4 {
            return Err(Error::shape("maxpool2d", format!("input {s:?} must be rank 4")));
        }
        if k == 0 || stride == 0 || s[2] < k || s[3] < k || !(s[2] - k).is_multiple_of(stride) || !(s[3] - k).is_multiple_of(stride) {
            return Err(Error::shape(
                "maxpool2d",
                format!("spatial dims {}x{} not divisible into {k}x{k} windows with stride {stride}", s[2], s[3]),
            ));
        }
        let (h_out, w_out) = ((s[2] - k) / stride + 1, (s[3] - k) / stride + 1);
        let (out, argmax) = kernels::maxpool_forward(self.value(x).data(), s[0], s[1], s[2], s[3], k, stride, h_out, w_out);
        let value = Tensor::from_parts_unchecked(vec![s[0], s[1], h_out, w_out], out);
        self.push(value, Op::MaxPool { x, argmax }, &[x])
    }

    /// `y = x·Wᵀ + b` for `x: N×d_in`, `W: d_out×d_in`.
    pub fn linear(&mut self, x: Var, w: Var, b: Var) -> Result<Var> {
        let xs = self.value(x).shape();
        let ws = self.value(w).shape();
        let bs = self.value(b).shape();
        if xs.len() != 2 || ws.len() != 2 || xs[1] != ws[1] || bs != [ws[0]] {
            return Err(Error::shape(
                "fully_connected",
                format!("x {xs:?}, weight {ws:?}, bias {bs:?} do not agree"),
            ));
        }
        let (n, d_in, d_out) = (xs[0], xs[1], ws[0]);
        let mut out = vec![T::zero(); n * d_out];
        T::gemm(n, d_in, d_out, self.value(x).data(), false, self.value(w).data(), true, &mut out, false);
        let bias = self.value(b).data();
        for row in out.chunks_mut(d_out) {
            for (o, &bv) in row.iter_mut().zip(bias) {
                *o = *o + bv;
            }
        }
        let value = Tensor::from_parts_unchecked(vec![n, d_out], out);
        self.push(value, Op::Linear { x, w, b }, &[x, w, b])
    }

    pub fn relu(&mut self, x: Var) -> Result<Var> {
        let v = self.value(x);
        let out = v.data().iter().map(|&a| if a > T::zero() { a } else { T::zero() }).collect();
        let value = Tensor::from_parts_unchecked(v.shape().to_vec(), out);
        self.push(value, Op::Relu { x }, &[x])
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        let (va, vb) = (self.value(a), self.value(b));
        if va.shape() != vb.shape() {
            return Err(Error::shape("add", format!("{:?} vs {:?}", va.shape(), vb.shape())));
        }
        let out = va.data().iter().zip(vb.data()).map(|(&x, &y)| x + y).collect();
        let value = Tensor::from_parts_unchecked(va.shape().to_vec(), out);
        self.push(value, Op::Add { a, b }, &[a, b])
    }

    /// `a + weight·b` for equally shaped operands.
    pub fn weighted_sum(&mut self, a: Var, b: Var, weight: f64) -> Result<Var> {
        let (va, vb) = (self.value(a), self.value(b));
        if va.shape() != vb.shape() {
            return Err(Error::shape("weighted_sum", format!("{:?} vs {:?}", va.shape(), vb.shape())));
        }
        let w = T::from_f64(weight);
        let out = va.data().iter().zip(vb.data()).map(|(&x, &y)| x + w * y).collect();
        let value = Tensor::from_parts_unchecked(va.shape().to_vec(), out);
        self.push(value, Op::WeightedSum { a, b, weight: w }, &[a, b])
    }

    /// Batch norm over `N×C×H×W` (per channel over N·H·W) or `N×C`.
    pub fn batchnorm(&mut self, x: Var, gamma: Var, beta: Var, mode: BnMode<'_, T>, eps: f64) -> Result<Var> {
        let s = self.value(x).shape().to_vec();
        let (n, c, spatial) = match s.len() {
            2 => (s[0], s[1], 1),
            4 => (s[0], s[1], s[2] * s[3]),
            _ => return Err(Error::shape("batchnorm", format!("input {s:?} must be rank 2 or 4"))),
        };
        if self.value(gamma).shape() != [c] || self.value(beta).shape() != [c] {
            return Err(Error::shape("batchnorm", format!("gamma/beta must be [{c}]")));
        }
        let eps_t = T::from_f64(eps);
        let (out, xhat, inv_std, batch_stats) = match mode {
            BnMode::Train { running_mean, running_var, momentum } => {
                if n < 2 {
                    return Err(invalid("batchnorm in train mode needs a batch of at least 2"));
                }
                if running_mean.len() != c || running_var.len() != c {
                    return Err(Error::shape("batchnorm", "running statistics length mismatch"));
                }
                let st = kernels::batchnorm_train(
                    self.value(x).data(),
                    n,
                    c,
                    spatial,
                    self.value(gamma).data(),
                    self.value(beta).data(),
                    eps_t,
                );
                let m = T::from_f64(momentum);
                for ch in 0..c {
                    running_mean[ch] = m * running_mean[ch] + (T::one() - m) * st.mean[ch];
                    running_var[ch] = m * running_var[ch] + (T::one() - m) * st.var[ch];
                }
                (st.out, st.xhat, st.inv_std, true)
            }
            BnMode::Infer { running_mean, running_var } => {
                if running_mean.len() != c || running_var.len() != c {
                    return Err(Error::shape("batchnorm", "running statistics length mismatch"));
                }
                let inv_std: Vec<T> = running_var.iter().map(|&v| T::one() / (v + eps_t).sqrt()).collect();
                let xv = self.value(x).data();
                let (g, b) = (self.value(gamma).data(), self.value(beta).data());
                let mut xhat = vec![T::zero(); xv.len()];
                let mut out = vec![T::zero(); xv.len()];
                for i in 0..n {
                    for ch in 0..c {
                        let off = (i * c + ch) * spatial;
                        for j in off..off + spatial {
                            xhat[j] = (xv[j] - running_mean[ch]) * inv_std[ch];
                            out[j] = g[ch] * xhat[j] + b[ch];
                        }
                    }
                }
                (out, xhat, inv_std, false)
            }
        };
        let value = Tensor::from_parts_unchecked(s, out);
        let (xhat, inv_std) = if self.record { (xhat, inv_std) } else { (Vec::new(), Vec::new()) };
        self.push(
            value,
            Op::BatchNorm { x, gamma, beta, xhat, inv_std, batch_stats, dims: [n, c, spatial] },
            &[x, gamma, beta],
        )
    }

    pub fn global_avg_pool(&mut self, x: Var) -> Result<Var> {
        let s = self.value(x).shape().to_vec();
        if s.len() != 4 {
            return Err(Error::shape("global_avg_pool", format!("input {s:?} must be rank 4")));
        }
        let plane = s[2] * s[3];
        let inv = T::from_f64(1.0 / plane as f64);
        let out = self.value(x).data().chunks(plane).map(|p| p.iter().copied().sum::<T>() * inv).collect();
        let value = Tensor::from_parts_unchecked(vec![s[0], s[1]], out);
        self.push(value, Op::GlobalAvgPool { x }, &[x])
    }

    /// Collapses all trailing axes: `N×… → N×d`.
    pub fn flatten(&mut self, x: Var) -> Result<Var> {
        let v = self.value(x);
        let n = v.shape()[0];
        let value = v.clone().reshape(vec![n, v.len() / n])?;
        self.push(value, Op::Reshape { x }, &[x])
    }

    /// Row-wise `softmax(logits / t)`.
    pub fn softmax_t(&mut self, logits: Var, t: f64) -> Result<Var> {
        check_temperature(t)?;
        let v = self.value(logits);
        let (rows, cols) = rows_cols(v, "softmax_t")?;
        let tt = T::from_f64(t);
        let out = kernels::softmax_rows(v.data(), rows, cols, tt);
        let value = Tensor::from_parts_unchecked(v.shape().to_vec(), out);
        self.push(value, Op::Softmax { x: logits, t: tt }, &[logits])
    }

    /// Mean over rows of `−Σ_k target_k · log softmax(logits / t)_k`.
    /// Target rows must sum to one.
    pub fn soft_cross_entropy(&mut self, logits: Var, target: &Tensor<T>, t: f64) -> Result<Var> {
        check_target_rows(target)?;
        self.soft_cross_entropy_unchecked(logits, target, t)
    }

    /// As [`Graph::soft_cross_entropy`] but accepts unnormalized target rows.
    pub fn soft_cross_entropy_unchecked(&mut self, logits: Var, target: &Tensor<T>, t: f64) -> Result<Var> {
        check_temperature(t)?;
        let v = self.value(logits);
        let (rows, cols) = rows_cols(v, "soft_cross_entropy")?;
        if target.shape() != v.shape() {
            return Err(Error::shape(
                "soft_cross_entropy",
                format!("logits {:?} vs target {:?}", v.shape(), target.shape()),
            ));
        }
        let tt = T::from_f64(t);
        let lp = kernels::log_softmax_rows(v.data(), rows, cols, tt);
        let floor = T::from_f64(LOG_CLAMP.ln());
        let mut total = T::zero();
        for (l, &q) in lp.iter().zip(target.data()) {
            if q != T::zero() {
                total = total - q * l.max(floor);
            }
        }
        let value = Tensor::scalar(total / T::from_f64(rows as f64));
        self.push(value, Op::SoftCrossEntropy { logits, target: target.clone(), t: tt }, &[logits])
    }

    /// Mean over rows of `Σ_d (a − b)²`.
    pub fn sum_squared_error(&mut self, a: Var, b: Var) -> Result<Var> {
        let (va, vb) = (self.value(a), self.value(b));
        if va.shape() != vb.shape() || va.rank() != 2 {
            return Err(Error::shape(
                "sum_squared_error",
                format!("{:?} vs {:?} (both must be N×d)", va.shape(), vb.shape()),
            ));
        }
        let n = va.shape()[0];
        let s: T = va.data().iter().zip(vb.data()).map(|(&x, &y)| (x - y) * (x - y)).sum();
        let value = Tensor::scalar(s / T::from_f64(n as f64));
        self.push(value, Op::SumSquaredError { a, b }, &[a, b])
    }

    pub fn sum(&mut self, x: Var) -> Result<Var> {
        let s = self.value(x).data().iter().copied().sum();
        self.push(Tensor::scalar(s), Op::Sum { x }, &[x])
    }

    /// Reverse sweep from a single-element `loss`.
    pub fn backward(&self, loss: Var) -> Result<Gradients<T>> {
        if !self.record {
            return Err(invalid("backward on an inference graph"));
        }
        if self.value(loss).len() != 1 {
            return Err(Error::shape("backward", format!("loss must be a scalar, got {:?}", self.value(loss).shape())));
        }
        let mut grads: Vec<Option<Vec<T>>> = (0..self.nodes.len()).map(|_| None).collect();
        if self.nodes[loss.0].requires_grad {
            grads[loss.0] = Some(vec![T::one()]);
        }
        for i in (0..=loss.0).rev() {
            let Some(gy) = grads[i].take() else { continue };
            let node = &self.nodes[i];
            match &node.op {
                Op::Leaf | Op::Param(_) => {
                    grads[i] = Some(gy);
                }
                op => self.propagate(op, &node.value, &gy, &mut grads)?,
            }
        }
        let mut param_grads = Vec::new();
        let mut leaf_grads = Vec::with_capacity(self.nodes.len());
        for (i, (node, g)) in self.nodes.iter().zip(grads).enumerate() {
            let t = g.map(|g| Tensor::from_parts_unchecked(node.value.shape().to_vec(), g));
            if let (Op::Param(id), Some(t)) = (&node.op, &t) {
                param_grads.push((*id, Var(i), t.clone()));
            }
            leaf_grads.push(t);
        }
        Ok(Gradients { leaf: leaf_grads, params: param_grads })
    }

    fn accum(&self, grads: &mut [Option<Vec<T>>], v: Var, g: Vec<T>) {
        if !self.nodes[v.0].requires_grad {
            return;
        }
        match &mut grads[v.0] {
            Some(acc) => {
                for (a, b) in acc.iter_mut().zip(g) {
                    *a = *a + b;
                }
            }
            slot @ None => *slot = Some(g),
        }
    }

    fn propagate(&self, op: &Op<T>, out: &Tensor<T>, gy: &[T], grads: &mut [Option<Vec<T>>]) -> Result<()> {
        match op {
            Op::Leaf | Op::Param(_) => {}
            Op::Conv2d { x, w, b, geom, cols } => {
                let need = [self.requires_grad(*x), self.requires_grad(*w), self.requires_grad(*b)];
                let g = kernels::conv2d_backward(cols, self.value(*w).data(), gy, geom, need);
                if let Some(dx) = g.dx {
                    self.accum(grads, *x, dx);
                }
                if let Some(dw) = g.dw {
                    self.accum(grads, *w, dw);
                }
                if let Some(db) = g.db {
                    self.accum(grads, *b, db);
                }
            }
            Op::MaxPool { x, argmax } => {
                let mut dx = vec![T::zero(); self.value(*x).len()];
                for (&idx, &g) in argmax.iter().zip(gy) {
                    dx[idx as usize] = dx[idx as usize] + g;
                }
                self.accum(grads, *x, dx);
            }
            Op::Linear { x, w, b } => {
                let (xs, ws) = (self.value(*x).shape(), self.value(*w).shape());
                let (n, d_in, d_out) = (xs[0], xs[1], ws[0]);
                if self.requires_grad(*x) {
                    let mut dx = vec![T::zero(); n * d_in];
                    T::gemm(n, d_out, d_in, gy, false, self.value(*w).data(), false, &mut dx, false);
                    self.accum(grads, *x, dx);
                }
                if self.requires_grad(*w) {
                    let mut dw = vec![T::zero(); d_out * d_in];
                    T::gemm(d_out, n, d_in, gy, true, self.value(*x).data(), false, &mut dw, false);
                    self.accum(grads, *w, dw);
                }
                if self.requires_grad(*b) {
                    let mut db = vec![T::zero(); d_out];
                    for row in gy.chunks(d_out) {
                        for (d, &g) in db.iter_mut().zip(row) {
                            *d = *d + g;
                        }
                    }
                    self.accum(grads, *b, db);
                }
            }
            Op::Relu { x } => {
                let dx = out
                    .data()
                    .iter()
                    .zip(gy)
                    .map(|(&o, &g)| if o > T::zero() { g } else { T::zero() })
                    .collect();
                self.accum(grads, *x, dx);
            }
            Op::Add { a, b } => {
                self.accum(grads, *a, gy.to_vec());
                self.accum(grads, *b, gy.to_vec());
            }
            Op::WeightedSum { a, b, weight } => {
                self.accum(grads, *a, gy.to_vec());
                self.accum(grads, *b, gy.iter().map(|&g| g * *weight).collect());
            }
            Op::BatchNorm { x, gamma, beta, xhat, inv_std, batch_stats, dims } => {
                let [n, c, spatial] = *dims;
                let gam = self.value(*gamma).data();
                if *batch_stats {
                    let (dx, dg, db) = kernels::batchnorm_train_backward(gy, xhat, inv_std, gam, n, c, spatial);
                    self.accum(grads, *x, dx);
                    self.accum(grads, *gamma, dg);
                    self.accum(grads, *beta, db);
                } else {
                    let mut dx = vec![T::zero(); gy.len()];
                    let mut dg = vec![T::zero(); c];
                    let mut db = vec![T::zero(); c];
                    for i in 0..n {
                        for ch in 0..c {
                            let off = (i * c + ch) * spatial;
                            for j in off..off + spatial {
                                dx[j] = gy[j] * gam[ch] * inv_std[ch];
                                dg[ch] = dg[ch] + gy[j] * xhat[j];
                                db[ch] = db[ch] + gy[j];
                            }
                        }
                    }
                    self.accum(grads, *x, dx);
                    self.accum(grads, *gamma, dg);
                    self.accum(grads, *beta, db);
                }
            }
            Op::GlobalAvgPool { x } => {
                let s = self.value(*x).shape();
                let plane = s[2] * s[3];
                let inv = T::from_f64(1.0 / plane as f64);
                let mut dx = Vec::with_capacity(self.value(*x).len());
                for &g in gy {
                    dx.extend(std::iter::repeat_n(g * inv, plane));
                }
                self.accum(grads, *x, dx);
            }
            Op::Reshape { x } => self.accum(grads, *x, gy.to_vec()),
            Op::Softmax { x, t } => {
                let cols = out.shape()[1];
                let mut dx = vec![T::zero(); gy.len()];
                for ((p, g), d) in out.data().chunks(cols).zip(gy.chunks(cols)).zip(dx.chunks_mut(cols)) {
                    let dot: T = p.iter().zip(g).map(|(&a, &b)| a * b).sum();
                    for ((dd, &pp), &gg) in d.iter_mut().zip(p).zip(g) {
                        *dd = pp * (gg - dot) / *t;
                    }
                }
                self.accum(grads, *x, dx);
            }
            Op::SoftCrossEntropy { logits, target, t } => {
                let z = self.value(*logits);
                let (rows, cols) = (z.shape()[0], z.shape()[1]);
                let lp = kernels::log_softmax_rows(z.data(), rows, cols, *t);
                let floor = T::from_f64(LOG_CLAMP.ln());
                let scale = gy[0] / (T::from_f64(rows as f64) * *t);
                let mut dz = vec![T::zero(); z.len()];
                for r in 0..rows {
                    let lrow = &lp[r * cols..(r + 1) * cols];
                    let trow = &target.data()[r * cols..(r + 1) * cols];
                    // Clamped terms are constant in the logits.
                    let active: T = lrow.iter().zip(trow).filter(|(l, _)| **l > floor).map(|(_, &q)| q).sum();
                    for j in 0..cols {
                        let own = if lrow[j] > floor { trow[j] } else { T::zero() };
                        dz[r * cols + j] = scale * (active * lrow[j].exp() - own);
                    }
                }
                self.accum(grads, *logits, dz);
            }
            Op::SumSquaredError { a, b } => {
                let (va, vb) = (self.value(*a), self.value(*b));
                let scale = T::from_f64(2.0) * gy[0] / T::from_f64(va.shape()[0] as f64);
                let da: Vec<T> = va.data().iter().zip(vb.data()).map(|(&x, &y)| scale * (x - y)).collect();
                if self.requires_grad(*b) {
                    self.accum(grads, *b, da.iter().map(|&v| -v).collect());
                }
                self.accum(grads, *a, da);
            }
            Op::Sum { x } => {
                let n = self.value(*x).len();
                self.accum(grads, *x, vec![gy[0]; n]);
            }
        }
        Ok(())
    }
}

fn op_name<T>(op: &Op<T>) -> &'static str {
    match op {
        Op::Leaf => "leaf",
        Op::Param(_) => "param",
        Op::Conv2d { .. } => "conv2d",
        Op::MaxPool { .. } => "maxpool2d",
        Op::Linear { .. } => "fully_connected",
        Op::Relu { .. } => "relu",
        Op::Add { .. } => "add",
        Op::WeightedSum { .. } => "weighted_sum",
        Op::BatchNorm { .. } => "batchnorm",
        Op::GlobalAvgPool { .. } => "global_avg_pool",
        Op::Reshape { .. } => "flatten",
        Op::Softmax { .. } => "softmax_t",
        Op::SoftCrossEntropy { .. } => "soft_cross_entropy",
        Op::SumSquaredError { .. } => "sum_squared_error",
        Op::Sum { .. } => "sum",
    }
}

fn check_temperature(t: f64) -> Result<()> {
    if t > 0.0 && t.is_finite() {
        Ok(())
    } else {
        Err(invalid(format!("temperature must be positive and finite, got {t}")))
    }
}

fn rows_cols<T: Element>(v: &Tensor<T>, op: &'static str) -> Result<(usize, usize)> {
    if v.rank() != 2 {
        return Err(Error::shape(op, format!("expected N×K, got {:?}", v.shape())));
    }
    Ok((v.shape()[0], v.shape()[1]))
}

fn check_target_rows<T: Element>(target: &Tensor<T>) -> Result<()> {
    let (rows, cols) = rows_cols(target, "soft_cross_entropy")?;
    for r in 0..rows {
        let row = &target.data()[r * cols..(r + 1) * cols];
        let s: f64 = row.iter().map(|v| v.as_f64()).sum();
        if (s - 1.0).abs() > TARGET_ROW_TOL || row.iter().any(|&v| v < T::zero()) {
            return Err(invalid(format!("target row {r} is not a distribution (sum {s})")));
        }
    }
    Ok(())
}

/// Gradients produced by one backward sweep.
pub struct Gradients<T> {
    leaf: Vec<Option<Tensor<T>>>,
    params: Vec<(ParamId, Var, Tensor<T>)>,
}

impl<T: Element> Gradients<T> {
    /// Gradient of a leaf input or parameter node, if it was reached.
    pub fn wrt(&self, v: Var) -> Option<&Tensor<T>> {
        self.leaf.get(v.0).and_then(|g| g.as_ref())
    }

    pub fn params(&self) -> impl Iterator<Item = (ParamId, &Tensor<T>)> {
        self.params.iter().map(|(id, _, t)| (*id, t))
    }

    /// Adds every parameter gradient into `store`.
    pub fn apply_to(&self, store: &mut ParamStore<T>) -> Result<()> {
        for (id, g) in self.params() {
            store.accumulate_grad(id, g)?;
        }
        Ok(())
    }
}

/// `softmax(logits / t)` on a plain tensor.
pub fn softmax_t<T: Element>(logits: &Tensor<T>, t: f64) -> Result<Tensor<T>> {
    check_temperature(t)?;
    let (rows, cols) = rows_cols(logits, "softmax_t")?;
    Tensor::new(logits.shape().to_vec(), kernels::softmax_rows(logits.data(), rows, cols, T::from_f64(t)))
}

/// Shannon entropy of each row, averaged over rows.
pub fn mean_row_entropy<T: Element>(p: &Tensor<T>) -> f64 {
    let cols = p.shape()[1];
    let rows = p.len() / cols;
    let total: f64 = p
        .data()
        .iter()
        .map(|v| v.as_f64())
        .filter(|&v| v > 0.0)
        .map(|v| -v * v.max(LOG_CLAMP).ln())
        .sum();
    total / rows as f64
}
