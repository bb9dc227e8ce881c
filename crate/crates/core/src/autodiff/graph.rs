//! Tape-based reverse-mode differentiation over [`Tensor`] values.
//!
//! A [`Graph`] records every operation of one forward pass. `backward` walks
//! the tape in reverse from a scalar node and returns fresh gradient buffers,
//! so the same graph can be differentiated for several losses in turn.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::params::{Component, GradientVector, ParamGrads, ParamId, ParameterSet};
use super::tensor::{gemm, Tensor};
use crate::error::{GeegaError, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Var(usize);

#[derive(Debug)]
enum Op {
    Constant,
    Param,
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    AddBroadcast(Var, Var),
    Scale(Var, f64),
    MatMul(Var, Var),
    Bmm { a: Var, b: Var, ta: bool, tb: bool },
    Permute { x: Var, axes: Vec<usize> },
    Reshape(Var),
    Relu(Var),
    Sigmoid(Var),
    Softmax(Var),
    LayerNorm { x: Var, gamma: Var, beta: Var, xhat: Vec<f64>, rstd: Vec<f64> },
    Dropout { x: Var, mask: Vec<f64> },
    Sum(Var),
    Mean(Var),
    Concat(Vec<Var>),
    PrependRow { x: Var, row: Var },
    SelectRow { x: Var, index: usize },
    MeanRows(Var),
    MixNodes { x: Var, adjacency: Tensor },
    BceWithLogits { z: Var, labels: Vec<f64> },
    GitLoss { e: Var, centers: Tensor, labels: Vec<u8> },
}

#[derive(Debug)]
struct Node {
    value: Tensor,
    op: Op,
}

pub struct Graph {
    nodes: Vec<Node>,
    params: Vec<(ParamId, Var)>,
    train: bool,
    rng: ChaCha8Rng,
}

impl Graph {
    /// `train` enables dropout; masks are drawn from a generator seeded with `seed`.
    pub fn new(train: bool, seed: u64) -> Self {
        Graph {
            nodes: Vec::new(),
            params: Vec::new(),
            train,
            rng: ChaCha8Rng::seed_from_u64(seed),
        }
    }

    pub fn eval() -> Self {
        Graph::new(false, 0)
    }

    pub fn is_train(&self) -> bool {
        self.train
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn push(&mut self, value: Tensor, op: Op) -> Var {
        self.nodes.push(Node { value, op });
        Var(self.nodes.len() - 1)
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    pub fn shape(&self, v: Var) -> &[usize] {
        self.nodes[v.0].value.shape()
    }

    pub fn constant(&mut self, t: Tensor) -> Var {
        self.push(t, Op::Constant)
    }

    /// Leaf node holding a copy of a parameter value.
    pub fn param(&mut self, params: &ParameterSet, id: ParamId) -> Var {
        let v = self.push(params.value(id).clone(), Op::Param);
        self.params.push((id, v));
        v
    }

    pub fn add(&mut self, a: Var, b: Var) -> Var {
        let (x, y) = (self.value(a), self.value(b));
        assert_eq!(x.shape(), y.shape(), "add shape mismatch");
        let data = x.data().iter().zip(y.data()).map(|(p, q)| p + q).collect();
        let t = Tensor::from_parts(x.shape(), data);
        self.push(t, Op::Add(a, b))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Var {
        let (x, y) = (self.value(a), self.value(b));
        assert_eq!(x.shape(), y.shape(), "sub shape mismatch");
        let data = x.data().iter().zip(y.data()).map(|(p, q)| p - q).collect();
        let t = Tensor::from_parts(x.shape(), data);
        self.push(t, Op::Sub(a, b))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Var {
        let (x, y) = (self.value(a), self.value(b));
        assert_eq!(x.shape(), y.shape(), "mul shape mismatch");
        let data = x.data().iter().zip(y.data()).map(|(p, q)| p * q).collect();
        let t = Tensor::from_parts(x.shape(), data);
        self.push(t, Op::Mul(a, b))
    }

    /// `a + b` where `b`'s shape is a trailing suffix of `a`'s shape.
    pub fn add_broadcast(&mut self, a: Var, b: Var) -> Var {
        let (x, y) = (self.value(a), self.value(b));
        let (xs, ys) = (x.shape(), y.shape());
        assert!(
            ys.len() <= xs.len() && xs[xs.len() - ys.len()..] == *ys,
            "broadcast shape {ys:?} is not a suffix of {xs:?}"
        );
        let n = y.len();
        let data = x
            .data()
            .chunks(n)
            .flat_map(|c| c.iter().zip(y.data()).map(|(p, q)| p + q))
            .collect();
        let t = Tensor::from_parts(xs, data);
        self.push(t, Op::AddBroadcast(a, b))
    }

    pub fn scale(&mut self, a: Var, s: f64) -> Var {
        let x = self.value(a);
        let t = Tensor::from_parts(x.shape(), x.data().iter().map(|v| v * s).collect());
        self.push(t, Op::Scale(a, s))
    }

    /// `a [.., k] @ b [k, n] -> [.., n]`, leading axes of `a` flattened.
    pub fn matmul(&mut self, a: Var, b: Var) -> Var {
        let (x, w) = (self.value(a), self.value(b));
        assert_eq!(w.rank(), 2, "matmul rhs must be 2-D");
        let k = x.last_dim();
        assert_eq!(k, w.shape()[0], "matmul inner dim mismatch {:?} x {:?}", x.shape(), w.shape());
        let n = w.shape()[1];
        let m = x.len() / k;
        let mut out = vec![0.0; m * n];
        gemm(m, k, n, 1.0, x.data(), false, w.data(), false, 0.0, &mut out);
        let mut shape = x.shape().to_vec();
        *shape.last_mut().unwrap() = n;
        let t = Tensor::from_parts(&shape, out);
        self.push(t, Op::MatMul(a, b))
    }

    /// Batched `op(a) @ op(b)` over rank-3 tensors `[batch, rows, cols]`.
    pub fn bmm(&mut self, a: Var, b: Var, ta: bool, tb: bool) -> Var {
        let (x, y) = (self.value(a), self.value(b));
        assert!(x.rank() == 3 && y.rank() == 3, "bmm needs rank-3 operands");
        assert_eq!(x.shape()[0], y.shape()[0], "bmm batch mismatch");
        let batch = x.shape()[0];
        let (m, k) = if ta { (x.shape()[2], x.shape()[1]) } else { (x.shape()[1], x.shape()[2]) };
        let (k2, n) = if tb { (y.shape()[2], y.shape()[1]) } else { (y.shape()[1], y.shape()[2]) };
        assert_eq!(k, k2, "bmm inner dim mismatch");
        let mut out = vec![0.0; batch * m * n];
        for i in 0..batch {
            gemm(
                m,
                k,
                n,
                1.0,
                &x.data()[i * m * k..(i + 1) * m * k],
                ta,
                &y.data()[i * k * n..(i + 1) * k * n],
                tb,
                0.0,
                &mut out[i * m * n..(i + 1) * m * n],
            );
        }
        let t = Tensor::from_parts(&[batch, m, n], out);
        self.push(t, Op::Bmm { a, b, ta, tb })
    }

    pub fn permute(&mut self, x: Var, axes: &[usize]) -> Var {
        let (data, shape) = permute_data(self.value(x), axes);
        let t = Tensor::from_parts(&shape, data);
        self.push(t, Op::Permute { x, axes: axes.to_vec() })
    }

    pub fn reshape(&mut self, x: Var, shape: &[usize]) -> Var {
        let t = self
            .value(x)
            .clone()
            .reshape(shape)
            .unwrap_or_else(|e| panic!("{e}"));
        self.push(t, Op::Reshape(x))
    }

    pub fn relu(&mut self, x: Var) -> Var {
        let v = self.value(x);
        let t = Tensor::from_parts(v.shape(), v.data().iter().map(|&a| a.max(0.0)).collect());
        self.push(t, Op::Relu(x))
    }

    pub fn sigmoid(&mut self, x: Var) -> Var {
        let v = self.value(x);
        let t = Tensor::from_parts(v.shape(), v.data().iter().map(|&a| sigmoid(a)).collect());
        self.push(t, Op::Sigmoid(x))
    }

    /// Softmax over the last axis.
    pub fn softmax(&mut self, x: Var) -> Var {
        let v = self.value(x);
        let n = v.last_dim();
        let mut out = v.data().to_vec();
        for row in out.chunks_mut(n) {
            let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let mut sum = 0.0;
            for e in row.iter_mut() {
                *e = (*e - max).exp();
                sum += *e;
            }
            for e in row.iter_mut() {
                *e /= sum;
            }
        }
        let t = Tensor::from_parts(v.shape(), out);
        self.push(t, Op::Softmax(x))
    }

    /// Layer normalization over the last axis with affine `gamma`, `beta`.
    pub fn layer_norm(&mut self, x: Var, gamma: Var, beta: Var, eps: f64) -> Var {
        let v = self.value(x);
        let n = v.last_dim();
        assert_eq!(self.value(gamma).len(), n);
        assert_eq!(self.value(beta).len(), n);
        let g = self.value(gamma).data();
        let b = self.value(beta).data();
        let rows = v.len() / n;
        let mut xhat = vec![0.0; v.len()];
        let mut rstd = vec![0.0; rows];
        let mut out = vec![0.0; v.len()];
        for r in 0..rows {
            let row = &v.data()[r * n..(r + 1) * n];
            let mean = row.iter().sum::<f64>() / n as f64;
            let var = row.iter().map(|a| (a - mean) * (a - mean)).sum::<f64>() / n as f64;
            let rs = 1.0 / (var + eps).sqrt();
            rstd[r] = rs;
            for j in 0..n {
                let h = (row[j] - mean) * rs;
                xhat[r * n + j] = h;
                out[r * n + j] = h * g[j] + b[j];
            }
        }
        let t = Tensor::from_parts(v.shape(), out);
        self.push(t, Op::LayerNorm { x, gamma, beta, xhat, rstd })
    }

    /// Inverted dropout with drop probability `p`; identity in eval mode.
    pub fn dropout(&mut self, x: Var, p: f64) -> Var {
        if !self.train || p <= 0.0 {
            return x;
        }
        let keep = 1.0 - p;
        let n = self.value(x).len();
        let mask: Vec<f64> = (0..n)
            .map(|_| if self.rng.gen::<f64>() < keep { 1.0 / keep } else { 0.0 })
            .collect();
        let v = self.value(x);
        let t = Tensor::from_parts(v.shape(), v.data().iter().zip(&mask).map(|(a, m)| a * m).collect());
        self.push(t, Op::Dropout { x, mask })
    }

    pub fn sum(&mut self, x: Var) -> Var {
        let s = self.value(x).data().iter().sum();
        self.push(Tensor::scalar(s), Op::Sum(x))
    }

    pub fn mean(&mut self, x: Var) -> Var {
        let v = self.value(x);
        let s = v.data().iter().sum::<f64>() / v.len() as f64;
        self.push(Tensor::scalar(s), Op::Mean(x))
    }

    /// Concatenates along the last axis; leading axes must agree.
    pub fn concat(&mut self, xs: &[Var]) -> Var {
        assert!(!xs.is_empty(), "concat of nothing");
        let lead = &self.value(xs[0]).shape()[..self.value(xs[0]).rank() - 1];
        let rows: usize = lead.iter().product();
        let widths: Vec<usize> = xs.iter().map(|&v| self.value(v).last_dim()).collect();
        for &v in xs {
            let s = self.value(v).shape();
            assert_eq!(&s[..s.len() - 1], lead, "concat leading shape mismatch");
        }
        let total: usize = widths.iter().sum();
        let mut out = Vec::with_capacity(rows * total);
        for r in 0..rows {
            for (&v, &w) in xs.iter().zip(&widths) {
                out.extend_from_slice(&self.value(v).data()[r * w..(r + 1) * w]);
            }
        }
        let mut shape = lead.to_vec();
        shape.push(total);
        let t = Tensor::from_parts(&shape, out);
        self.push(t, Op::Concat(xs.to_vec()))
    }

    /// `[B, T, D]` with `row [D]` prepended to every sequence -> `[B, T+1, D]`.
    pub fn prepend_row(&mut self, x: Var, row: Var) -> Var {
        let v = self.value(x);
        assert_eq!(v.rank(), 3);
        let (b, t, d) = (v.shape()[0], v.shape()[1], v.shape()[2]);
        let r = self.value(row);
        assert_eq!(r.len(), d);
        let mut out = Vec::with_capacity(b * (t + 1) * d);
        for i in 0..b {
            out.extend_from_slice(r.data());
            out.extend_from_slice(&v.data()[i * t * d..(i + 1) * t * d]);
        }
        let t = Tensor::from_parts(&[b, t + 1, d], out);
        self.push(t, Op::PrependRow { x, row })
    }

    /// Row `index` of every sequence: `[B, T, D] -> [B, D]`.
    pub fn select_row(&mut self, x: Var, index: usize) -> Var {
        let v = self.value(x);
        assert_eq!(v.rank(), 3);
        let (b, t, d) = (v.shape()[0], v.shape()[1], v.shape()[2]);
        assert!(index < t);
        let mut out = Vec::with_capacity(b * d);
        for i in 0..b {
            out.extend_from_slice(&v.data()[(i * t + index) * d..(i * t + index + 1) * d]);
        }
        let t = Tensor::from_parts(&[b, d], out);
        self.push(t, Op::SelectRow { x, index })
    }

    /// Mean over the sequence axis: `[B, T, D] -> [B, D]`.
    pub fn mean_rows(&mut self, x: Var) -> Var {
        let v = self.value(x);
        assert_eq!(v.rank(), 3);
        let (b, t, d) = (v.shape()[0], v.shape()[1], v.shape()[2]);
        let mut out = vec![0.0; b * d];
        for i in 0..b {
            for s in 0..t {
                for j in 0..d {
                    out[i * d + j] += v.data()[(i * t + s) * d + j] / t as f64;
                }
            }
        }
        let t = Tensor::from_parts(&[b, d], out);
        self.push(t, Op::MeanRows(x))
    }

    /// Node aggregation `out[b] = adjacency @ x[b]` for `x [B, N, F]`.
    pub fn mix_nodes(&mut self, x: Var, adjacency: &Tensor) -> Var {
        let v = self.value(x);
        assert_eq!(v.rank(), 3);
        let (b, n, f) = (v.shape()[0], v.shape()[1], v.shape()[2]);
        assert_eq!(adjacency.shape(), &[n, n], "adjacency must be N x N");
        let mut out = vec![0.0; b * n * f];
        for i in 0..b {
            gemm(
                n,
                n,
                f,
                1.0,
                adjacency.data(),
                false,
                &v.data()[i * n * f..(i + 1) * n * f],
                false,
                0.0,
                &mut out[i * n * f..(i + 1) * n * f],
            );
        }
        let t = Tensor::from_parts(&[b, n, f], out);
        self.push(t, Op::MixNodes { x, adjacency: adjacency.clone() })
    }

    /// Mean binary cross-entropy of logits `z` (one per sample) against
    /// labels in {0, 1}, in the overflow-free logit form.
    pub fn bce_with_logits(&mut self, z: Var, labels: &[f64]) -> Var {
        let v = self.value(z);
        assert_eq!(v.len(), labels.len(), "one logit per label");
        let n = labels.len() as f64;
        let loss = v
            .data()
            .iter()
            .zip(labels)
            .map(|(&z, &y)| z.max(0.0) - z * y + (-z.abs()).exp().ln_1p())
            .sum::<f64>()
            / n;
        self.push(
            Tensor::scalar(loss),
            Op::BceWithLogits {
                z,
                labels: labels.to_vec(),
            },
        )
    }

    /// Center term plus cross-class pairwise term against fixed `centers [2, D]`.
    ///
    /// For every ordered pair `(i, j)` with different labels the pairwise
    /// term adds `1 / (1 + |e_i - c_{y_j}|^2)`.
    pub fn git_loss(&mut self, e: Var, labels: &[u8], centers: &Tensor) -> Var {
        let v = self.value(e);
        assert_eq!(v.rank(), 2);
        let (b, d) = (v.shape()[0], v.shape()[1]);
        assert_eq!(labels.len(), b);
        assert_eq!(centers.shape(), &[2, d]);
        let counts = class_counts(labels);
        let mut loss = 0.0;
        for (i, &y) in labels.iter().enumerate() {
            let row = &v.data()[i * d..(i + 1) * d];
            let own = &centers.data()[y as usize * d..(y as usize + 1) * d];
            let other_class = 1 - y as usize;
            let other = &centers.data()[other_class * d..(other_class + 1) * d];
            loss += 0.5 * sq_dist(row, own);
            let n_other = counts[other_class] as f64;
            if n_other > 0.0 {
                loss += n_other / (1.0 + sq_dist(row, other));
            }
        }
        self.push(
            Tensor::scalar(loss),
            Op::GitLoss {
                e,
                centers: centers.clone(),
                labels: labels.to_vec(),
            },
        )
    }

    /// Sign of every ReLU input on the tape, in recording order. Two passes
    /// with equal patterns lie on the same linear piece of the network.
    pub fn relu_pattern(&self) -> Vec<bool> {
        let mut out = Vec::new();
        for node in &self.nodes {
            if let Op::Relu(x) = node.op {
                out.extend(self.value(x).data().iter().map(|&v| v > 0.0));
            }
        }
        out
    }

    /// Reverse-mode gradients of scalar `loss` with respect to every node.
    pub fn backward(&self, loss: Var) -> Result<Gradients> {
        let lv = self.value(loss);
        if lv.len() != 1 {
            return Err(GeegaError::Contract(format!(
                "backward needs a scalar loss, got shape {:?}",
                lv.shape()
            )));
        }
        let mut grads: Vec<Option<Vec<f64>>> = vec![None; loss.0 + 1];
        grads[loss.0] = Some(vec![1.0]);
        for i in (0..=loss.0).rev() {
            let Some(dy) = grads[i].take() else { continue };
            self.backprop_node(i, &dy, &mut grads);
            grads[i] = Some(dy);
        }
        grads.resize(self.nodes.len(), None);
        Ok(Gradients { grads })
    }

    fn backprop_node(&self, i: usize, dy: &[f64], grads: &mut [Option<Vec<f64>>]) {
        let node = &self.nodes[i];
        let out = &node.value;
        match &node.op {
            Op::Constant | Op::Param => {}
            Op::Add(a, b) => {
                accumulate(grads, self, *a, |g| axpy(g, dy, 1.0));
                accumulate(grads, self, *b, |g| axpy(g, dy, 1.0));
            }
            Op::Sub(a, b) => {
                accumulate(grads, self, *a, |g| axpy(g, dy, 1.0));
                accumulate(grads, self, *b, |g| axpy(g, dy, -1.0));
            }
            Op::Mul(a, b) => {
                let (x, y) = (self.value(*a).data(), self.value(*b).data());
                accumulate(grads, self, *a, |g| {
                    for ((g, d), y) in g.iter_mut().zip(dy).zip(y) {
                        *g += d * y;
                    }
                });
                accumulate(grads, self, *b, |g| {
                    for ((g, d), x) in g.iter_mut().zip(dy).zip(x) {
                        *g += d * x;
                    }
                });
            }
            Op::AddBroadcast(a, b) => {
                accumulate(grads, self, *a, |g| axpy(g, dy, 1.0));
                let n = self.value(*b).len();
                accumulate(grads, self, *b, |g| {
                    for chunk in dy.chunks(n) {
                        axpy(g, chunk, 1.0);
                    }
                });
            }
            Op::Scale(a, s) => accumulate(grads, self, *a, |g| axpy(g, dy, *s)),
            Op::MatMul(a, b) => {
                let (x, w) = (self.value(*a), self.value(*b));
                let k = x.last_dim();
                let n = w.shape()[1];
                let m = x.len() / k;
                // dA = dC W^T ; dW = A^T dC
                accumulate(grads, self, *a, |g| gemm(m, n, k, 1.0, dy, false, w.data(), true, 1.0, g));
                accumulate(grads, self, *b, |g| gemm(k, m, n, 1.0, x.data(), true, dy, false, 1.0, g));
            }
            Op::Bmm { a, b, ta, tb } => {
                let (x, y) = (self.value(*a), self.value(*b));
                let batch = x.shape()[0];
                let (m, n) = (out.shape()[1], out.shape()[2]);
                let k = if *ta { x.shape()[1] } else { x.shape()[2] };
                let (xs, ys) = (m * k, k * n);
                let (ta, tb) = (*ta, *tb);
                accumulate(grads, self, *a, |g| {
                    for i in 0..batch {
                        let d = &dy[i * m * n..(i + 1) * m * n];
                        let yb = &y.data()[i * ys..(i + 1) * ys];
                        let gb = &mut g[i * xs..(i + 1) * xs];
                        if ta {
                            // A stored k x m: dA_stored = op(B) dC^T
                            gemm(k, n, m, 1.0, yb, tb, d, true, 1.0, gb);
                        } else {
                            // dA = dC op(B)^T
                            gemm(m, n, k, 1.0, d, false, yb, !tb, 1.0, gb);
                        }
                    }
                });
                accumulate(grads, self, *b, |g| {
                    for i in 0..batch {
                        let d = &dy[i * m * n..(i + 1) * m * n];
                        let xb = &x.data()[i * xs..(i + 1) * xs];
                        let gb = &mut g[i * ys..(i + 1) * ys];
                        if tb {
                            // B stored n x k: dB_stored = dC^T op(A)
                            gemm(n, m, k, 1.0, d, true, xb, ta, 1.0, gb);
                        } else {
                            // dB = op(A)^T dC
                            gemm(k, m, n, 1.0, xb, !ta, d, false, 1.0, gb);
                        }
                    }
                });
            }
            Op::Permute { x, axes } => {
                let mut inverse = vec![0; axes.len()];
                for (i, &a) in axes.iter().enumerate() {
                    inverse[a] = i;
                }
                let dyt = Tensor::from_parts(out.shape(), dy.to_vec());
                let (back, _) = permute_data(&dyt, &inverse);
                accumulate(grads, self, *x, |g| axpy(g, &back, 1.0));
            }
            Op::Reshape(x) => accumulate(grads, self, *x, |g| axpy(g, dy, 1.0)),
            Op::Relu(x) => {
                let xv = self.value(*x).data();
                accumulate(grads, self, *x, |g| {
                    for ((g, d), v) in g.iter_mut().zip(dy).zip(xv) {
                        if *v > 0.0 {
                            *g += d;
                        }
                    }
                });
            }
            Op::Sigmoid(x) => accumulate(grads, self, *x, |g| {
                for ((g, d), s) in g.iter_mut().zip(dy).zip(out.data()) {
                    *g += d * s * (1.0 - s);
                }
            }),
            Op::Softmax(x) => {
                let n = out.last_dim();
                accumulate(grads, self, *x, |g| {
                    for ((g, d), y) in g.chunks_mut(n).zip(dy.chunks(n)).zip(out.data().chunks(n)) {
                        let inner: f64 = d.iter().zip(y).map(|(a, b)| a * b).sum();
                        for j in 0..n {
                            g[j] += y[j] * (d[j] - inner);
                        }
                    }
                });
            }
            Op::LayerNorm { x, gamma, beta, xhat, rstd } => {
                let n = out.last_dim();
                let gv = self.value(*gamma).data();
                accumulate(grads, self, *gamma, |g| {
                    for (d, h) in dy.chunks(n).zip(xhat.chunks(n)) {
                        for j in 0..n {
                            g[j] += d[j] * h[j];
                        }
                    }
                });
                accumulate(grads, self, *beta, |g| {
                    for d in dy.chunks(n) {
                        axpy(g, d, 1.0);
                    }
                });
                accumulate(grads, self, *x, |g| {
                    for (r, ((g, d), h)) in g.chunks_mut(n).zip(dy.chunks(n)).zip(xhat.chunks(n)).enumerate() {
                        let mut mean_dh = 0.0;
                        let mut mean_dh_h = 0.0;
                        for j in 0..n {
                            let dh = d[j] * gv[j];
                            mean_dh += dh;
                            mean_dh_h += dh * h[j];
                        }
                        mean_dh /= n as f64;
                        mean_dh_h /= n as f64;
                        for j in 0..n {
                            let dh = d[j] * gv[j];
                            g[j] += rstd[r] * (dh - mean_dh - h[j] * mean_dh_h);
                        }
                    }
                });
            }
            Op::Dropout { x, mask } => accumulate(grads, self, *x, |g| {
                for ((g, d), m) in g.iter_mut().zip(dy).zip(mask) {
                    *g += d * m;
                }
            }),
            Op::Sum(x) => accumulate(grads, self, *x, |g| g.iter_mut().for_each(|v| *v += dy[0])),
            Op::Mean(x) => {
                let n = self.value(*x).len() as f64;
                accumulate(grads, self, *x, |g| g.iter_mut().for_each(|v| *v += dy[0] / n));
            }
            Op::Concat(xs) => {
                let total = out.last_dim();
                let rows = out.len() / total;
                let mut offset = 0;
                for &v in xs {
                    let w = self.value(v).last_dim();
                    accumulate(grads, self, v, |g| {
                        for r in 0..rows {
                            axpy(&mut g[r * w..(r + 1) * w], &dy[r * total + offset..r * total + offset + w], 1.0);
                        }
                    });
                    offset += w;
                }
            }
            Op::PrependRow { x, row } => {
                let (b, t1, d) = (out.shape()[0], out.shape()[1], out.shape()[2]);
                accumulate(grads, self, *row, |g| {
                    for i in 0..b {
                        axpy(g, &dy[i * t1 * d..i * t1 * d + d], 1.0);
                    }
                });
                accumulate(grads, self, *x, |g| {
                    let t = t1 - 1;
                    for i in 0..b {
                        axpy(&mut g[i * t * d..(i + 1) * t * d], &dy[(i * t1 + 1) * d..(i + 1) * t1 * d], 1.0);
                    }
                });
            }
            Op::SelectRow { x, index } => {
                let s = self.value(*x).shape();
                let (b, t, d) = (s[0], s[1], s[2]);
                accumulate(grads, self, *x, |g| {
                    for i in 0..b {
                        let at = (i * t + index) * d;
                        axpy(&mut g[at..at + d], &dy[i * d..(i + 1) * d], 1.0);
                    }
                });
            }
            Op::MeanRows(x) => {
                let s = self.value(*x).shape();
                let (b, t, d) = (s[0], s[1], s[2]);
                accumulate(grads, self, *x, |g| {
                    for i in 0..b {
                        for r in 0..t {
                            let at = (i * t + r) * d;
                            axpy(&mut g[at..at + d], &dy[i * d..(i + 1) * d], 1.0 / t as f64);
                        }
                    }
                });
            }
            Op::MixNodes { x, adjacency } => {
                let (b, n, f) = (out.shape()[0], out.shape()[1], out.shape()[2]);
                accumulate(grads, self, *x, |g| {
                    for i in 0..b {
                        let r = i * n * f..(i + 1) * n * f;
                        gemm(n, n, f, 1.0, adjacency.data(), true, &dy[r.clone()], false, 1.0, &mut g[r]);
                    }
                });
            }
            Op::BceWithLogits { z, labels } => {
                let zv = self.value(*z).data();
                let n = labels.len() as f64;
                accumulate(grads, self, *z, |g| {
                    for ((g, &z), &y) in g.iter_mut().zip(zv).zip(labels) {
                        *g += dy[0] * (sigmoid(z) - y) / n;
                    }
                });
            }
            Op::GitLoss { e, centers, labels } => {
                let ev = self.value(*e);
                let d = ev.shape()[1];
                let counts = class_counts(labels);
                accumulate(grads, self, *e, |g| {
                    for (i, &y) in labels.iter().enumerate() {
                        let row = &ev.data()[i * d..(i + 1) * d];
                        let own = &centers.data()[y as usize * d..(y as usize + 1) * d];
                        let oc = 1 - y as usize;
                        let other = &centers.data()[oc * d..(oc + 1) * d];
                        let n_other = counts[oc] as f64;
                        let coef = if n_other > 0.0 {
                            let q = 1.0 + sq_dist(row, other);
                            -2.0 * n_other / (q * q)
                        } else {
                            0.0
                        };
                        let gi = &mut g[i * d..(i + 1) * d];
                        for j in 0..d {
                            gi[j] += dy[0] * ((row[j] - own[j]) + coef * (row[j] - other[j]));
                        }
                    }
                });
            }
        }
    }
}

fn accumulate(grads: &mut [Option<Vec<f64>>], graph: &Graph, v: Var, f: impl FnOnce(&mut [f64])) {
    if matches!(graph.nodes[v.0].op, Op::Constant) {
        return;
    }
    let slot = grads[v.0].get_or_insert_with(|| vec![0.0; graph.nodes[v.0].value.len()]);
    f(slot);
}

fn axpy(y: &mut [f64], x: &[f64], a: f64) {
    for (y, x) in y.iter_mut().zip(x) {
        *y += a * x;
    }
}

pub(crate) fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

fn class_counts(labels: &[u8]) -> [usize; 2] {
    let ones = labels.iter().filter(|&&y| y == 1).count();
    [labels.len() - ones, ones]
}

fn permute_data(t: &Tensor, axes: &[usize]) -> (Vec<f64>, Vec<usize>) {
    let shape = t.shape();
    assert_eq!(axes.len(), shape.len(), "permute axes must cover every dimension");
    let rank = shape.len();
    let mut strides = vec![1; rank];
    for i in (0..rank.saturating_sub(1)).rev() {
        strides[i] = strides[i + 1] * shape[i + 1];
    }
    let new_shape: Vec<usize> = axes.iter().map(|&a| shape[a]).collect();
    let src_strides: Vec<usize> = axes.iter().map(|&a| strides[a]).collect();
    let mut out = Vec::with_capacity(t.len());
    let mut idx = vec![0usize; rank];
    let data = t.data();
    for _ in 0..t.len() {
        let off: usize = idx.iter().zip(&src_strides).map(|(i, s)| i * s).sum();
        out.push(data[off]);
        for d in (0..rank).rev() {
            idx[d] += 1;
            if idx[d] < new_shape[d] {
                break;
            }
            idx[d] = 0;
        }
    }
    (out, new_shape)
}

/// Result of one reverse sweep.
pub struct Gradients {
    grads: Vec<Option<Vec<f64>>>,
}

impl Gradients {
    /// Gradient of the loss with respect to node `v`, if it was reached.
    pub fn wrt(&self, v: Var) -> Option<&[f64]> {
        self.grads.get(v.0).and_then(|g| g.as_deref())
    }

    /// Per-parameter gradients; parameters the loss does not reach get zeros.
    pub fn param_grads(&self, graph: &Graph, params: &ParameterSet) -> ParamGrads {
        let mut out = ParamGrads::zeros(params);
        for &(id, v) in &graph.params {
            if let Some(g) = self.wrt(v) {
                axpy(out.get_mut(id), g, 1.0);
            }
        }
        out
    }

    pub fn vector(&self, graph: &Graph, params: &ParameterSet, subset: &[Component]) -> GradientVector {
        self.param_grads(graph, params).flatten(params, subset)
    }
}
