//! Recorded forward pass with reverse-mode gradients.
//!
//! A [`Graph`] is built fresh for every forward pass. Each operation appends a
//! node holding its output value and whatever it needs for the backward pass;
//! [`Graph::backward`] walks the nodes in reverse creation order (which is a
//! valid topological order) and returns gradients for every parameter that
//! took part in the computation.

use std::borrow::Cow;

use rand::Rng;

use crate::error::{NnError, Result};
use crate::params::{Gradients, ParamId, ParamStore};
use crate::tensor::{gemm, Tensor};

const LN_EPS: f64 = 1e-5;
const GELU_C: f64 = 0.797_884_560_802_865_4; // sqrt(2/pi)

/// Handle to a node of a [`Graph`].
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Var(usize);

enum Op {
    Input,
    Param(ParamId),
    MatMul(Var, Var),
    Add(Var, Var),
    AddRow(Var, Var),
    Scale(Var, f64),
    Gather(Var, Vec<usize>),
    ConcatCols(Var, Var),
    Elu(Var),
    Gelu(Var),
    LayerNorm {
        x: Var,
        gamma: Var,
        beta: Var,
        xhat: Vec<f64>,
        inv_std: Vec<f64>,
    },
    Dropout(Var, Vec<f64>),
    Softmax(Var),
    Attention {
        q: Var,
        k: Var,
        v: Var,
        segments: Vec<(usize, usize)>,
        heads: usize,
        probs: Vec<f64>,
    },
    NeighborMean(Var, Vec<Vec<usize>>),
    CrossEntropy {
        logits: Var,
        targets: Vec<(usize, usize)>,
        probs: Vec<f64>,
    },
    Mean(Var),
    Sum(Var),
}

struct Node<'a> {
    value: Cow<'a, Tensor>,
    op: Op,
}

/// Operation recorder for one forward pass.
pub struct Graph<'a> {
    nodes: Vec<Node<'a>>,
}

impl Default for Graph<'_> {
    fn default() -> Self {
        Self::new()
    }
}

fn shape_err(op: &'static str, a: &Tensor, b: &Tensor) -> NnError {
    NnError::Shape {
        op,
        left: a.shape().to_vec(),
        right: b.shape().to_vec(),
    }
}

impl<'a> Graph<'a> {
    pub fn new() -> Self {
        Graph { nodes: Vec::new() }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn push(&mut self, value: Tensor, op: Op) -> Var {
        self.nodes.push(Node {
            value: Cow::Owned(value),
            op,
        });
        Var(self.nodes.len() - 1)
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    /// Constant input; receives no gradient outside the graph.
    pub fn input(&mut self, t: Tensor) -> Var {
        self.push(t, Op::Input)
    }

    /// Leaf bound to a stored parameter, borrowed without copying.
    pub fn param(&mut self, store: &'a ParamStore, id: ParamId) -> Var {
        self.nodes.push(Node {
            value: Cow::Borrowed(store.value(id)),
            op: Op::Param(id),
        });
        Var(self.nodes.len() - 1)
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (ta, tb) = (self.value(a), self.value(b));
        if tb.shape().len() != 2 || ta.cols() != tb.rows() {
            return Err(shape_err("matmul", ta, tb));
        }
        let (m, k, n) = (ta.rows(), ta.cols(), tb.cols());
        let mut out = Tensor::zeros(&[m, n]);
        gemm(m, k, n, ta.data(), false, tb.data(), false, out.data_mut(), false);
        Ok(self.push(out, Op::MatMul(a, b)))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        let (ta, tb) = (self.value(a), self.value(b));
        if ta.shape() != tb.shape() {
            return Err(shape_err("add", ta, tb));
        }
        let mut out = ta.clone();
        out.add_assign(tb);
        Ok(self.push(out, Op::Add(a, b)))
    }

    /// Adds a bias vector to every row.
    pub fn add_row(&mut self, x: Var, bias: Var) -> Result<Var> {
        let (tx, tb) = (self.value(x), self.value(bias));
        if tb.len() != tx.cols() {
            return Err(shape_err("add_row", tx, tb));
        }
        let mut out = tx.clone();
        let c = tx.cols();
        for row in out.data_mut().chunks_mut(c.max(1)) {
            for (o, b) in row.iter_mut().zip(tb.data()) {
                *o += b;
            }
        }
        Ok(self.push(out, Op::AddRow(x, bias)))
    }

    /// `x @ w + b` with `w` of shape `(in, out)`.
    pub fn linear(&mut self, x: Var, w: Var, b: Var) -> Result<Var> {
        let xw = self.matmul(x, w)?;
        self.add_row(xw, b)
    }

    pub fn scale(&mut self, x: Var, s: f64) -> Var {
        let mut out = self.value(x).clone();
        out.data_mut().iter_mut().for_each(|v| *v *= s);
        self.push(out, Op::Scale(x, s))
    }

    /// Selects rows `idx` of `src` (repeats allowed).
    pub fn gather_rows(&mut self, src: Var, idx: &[usize]) -> Result<Var> {
        let t = self.value(src);
        let (r, c) = (t.rows(), t.cols());
        let mut data = Vec::with_capacity(idx.len() * c);
        for &i in idx {
            if i >= r {
                return Err(NnError::Index {
                    op: "gather_rows",
                    index: i,
                    len: r,
                });
            }
            data.extend_from_slice(t.row(i));
        }
        let out = Tensor::from_vec(&[idx.len(), c], data)?;
        Ok(self.push(out, Op::Gather(src, idx.to_vec())))
    }

    pub fn concat_cols(&mut self, a: Var, b: Var) -> Result<Var> {
        let (ta, tb) = (self.value(a), self.value(b));
        if ta.rows() != tb.rows() {
            return Err(shape_err("concat_cols", ta, tb));
        }
        let (r, ca, cb) = (ta.rows(), ta.cols(), tb.cols());
        let mut data = Vec::with_capacity(r * (ca + cb));
        for i in 0..r {
            data.extend_from_slice(ta.row(i));
            data.extend_from_slice(tb.row(i));
        }
        let out = Tensor::from_vec(&[r, ca + cb], data)?;
        Ok(self.push(out, Op::ConcatCols(a, b)))
    }

    /// Exponential linear unit with alpha = 1.
    pub fn elu(&mut self, x: Var) -> Var {
        let mut out = self.value(x).clone();
        out.data_mut().iter_mut().for_each(|v| *v = elu(*v));
        self.push(out, Op::Elu(x))
    }

    /// GELU, tanh approximation.
    pub fn gelu(&mut self, x: Var) -> Var {
        let mut out = self.value(x).clone();
        out.data_mut().iter_mut().for_each(|v| {
            let u = GELU_C * (*v + 0.044715 * *v * *v * *v);
            *v = 0.5 * *v * (1.0 + u.tanh());
        });
        self.push(out, Op::Gelu(x))
    }

    /// Row-wise layer normalisation with learned gain and shift.
    pub fn layer_norm(&mut self, x: Var, gamma: Var, beta: Var) -> Result<Var> {
        let (tx, tg, tb) = (self.value(x), self.value(gamma), self.value(beta));
        let c = tx.cols();
        if tg.len() != c || tb.len() != c {
            return Err(shape_err("layer_norm", tx, tg));
        }
        let r = tx.rows();
        let mut out = Tensor::zeros(tx.shape());
        let mut xhat = vec![0.0; r * c];
        let mut inv_std = vec![0.0; r];
        for i in 0..r {
            let row = tx.row(i);
            let mean = row.iter().sum::<f64>() / c as f64;
            let var = row.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / c as f64;
            let is = 1.0 / (var + LN_EPS).sqrt();
            inv_std[i] = is;
            let o = out.row_mut(i);
            for j in 0..c {
                let h = (row[j] - mean) * is;
                xhat[i * c + j] = h;
                o[j] = h * tg.data()[j] + tb.data()[j];
            }
        }
        Ok(self.push(
            out,
            Op::LayerNorm {
                x,
                gamma,
                beta,
                xhat,
                inv_std,
            },
        ))
    }

    /// Inverted dropout. Identity (no node recorded) when `!train` or `p == 0`.
    pub fn dropout<R: Rng>(&mut self, x: Var, p: f64, rng: &mut R, train: bool) -> Var {
        if !train || p <= 0.0 {
            return x;
        }
        let keep = 1.0 - p;
        let t = self.value(x);
        let mask: Vec<f64> = (0..t.len())
            .map(|_| if rng.random::<f64>() < keep { 1.0 / keep } else { 0.0 })
            .collect();
        let mut out = t.clone();
        for (o, m) in out.data_mut().iter_mut().zip(&mask) {
            *o *= m;
        }
        self.push(out, Op::Dropout(x, mask))
    }

    /// Row-wise softmax.
    pub fn softmax(&mut self, x: Var) -> Var {
        let mut out = self.value(x).clone();
        let c = out.cols().max(1);
        for row in out.data_mut().chunks_mut(c) {
            softmax_in_place(row);
        }
        self.push(out, Op::Softmax(x))
    }

    /// Multi-head scaled dot-product self-attention computed independently
    /// within each `(start, len)` row segment. Rows outside every segment get
    /// zero output.
    pub fn segment_attention(
        &mut self,
        q: Var,
        k: Var,
        v: Var,
        segments: &[(usize, usize)],
        heads: usize,
    ) -> Result<Var> {
        let (tq, tk, tv) = (self.value(q), self.value(k), self.value(v));
        if tq.shape() != tk.shape() || tq.shape() != tv.shape() {
            return Err(shape_err("segment_attention", tq, tk));
        }
        let (rows, d) = (tq.rows(), tq.cols());
        if heads == 0 || d % heads != 0 {
            return Err(NnError::Shape {
                op: "segment_attention(heads)",
                left: vec![d],
                right: vec![heads],
            });
        }
        for &(s, l) in segments {
            if s + l > rows {
                return Err(NnError::Index {
                    op: "segment_attention",
                    index: s + l,
                    len: rows,
                });
            }
        }
        let dh = d / heads;
        let scale = 1.0 / (dh as f64).sqrt();
        let mut out = Tensor::zeros(&[rows, d]);
        let mut probs = Vec::with_capacity(segments.iter().map(|&(_, l)| heads * l * l).sum());
        let (qd, kd, vd) = (tq.data(), tk.data(), tv.data());
        let od = out.data_mut();
        let mut p = Vec::new();
        for &(s, l) in segments {
            for h in 0..heads {
                let off = h * dh;
                for a in 0..l {
                    let qa = &qd[(s + a) * d + off..(s + a) * d + off + dh];
                    p.clear();
                    for b in 0..l {
                        let kb = &kd[(s + b) * d + off..(s + b) * d + off + dh];
                        p.push(scale * dot(qa, kb));
                    }
                    softmax_in_place(&mut p);
                    let oa = &mut od[(s + a) * d + off..(s + a) * d + off + dh];
                    for (b, &pb) in p.iter().enumerate() {
                        let vb = &vd[(s + b) * d + off..(s + b) * d + off + dh];
                        for (o, x) in oa.iter_mut().zip(vb) {
                            *o += pb * x;
                        }
                    }
                    probs.extend_from_slice(&p);
                }
            }
        }
        Ok(self.push(
            out,
            Op::Attention {
                q,
                k,
                v,
                segments: segments.to_vec(),
                heads,
                probs,
            },
        ))
    }

    /// Attention weights recorded by a [`Graph::segment_attention`] node, laid
    /// out segment-major, then head, then query row.
    pub fn attention_probs(&self, v: Var) -> Option<&[f64]> {
        match &self.nodes[v.0].op {
            Op::Attention { probs, .. } => Some(probs),
            _ => None,
        }
    }

    /// Row `i` of the output is the mean of rows `hoods[i]` of `x`
    /// (sum first, then one division). Every neighbourhood must be non-empty.
    pub fn neighbor_mean(&mut self, x: Var, hoods: &[Vec<usize>]) -> Result<Var> {
        let t = self.value(x);
        let (r, c) = (t.rows(), t.cols());
        let mut out = Tensor::zeros(&[hoods.len(), c]);
        for (i, hood) in hoods.iter().enumerate() {
            if hood.is_empty() {
                return Err(NnError::Index {
                    op: "neighbor_mean(empty)",
                    index: i,
                    len: 0,
                });
            }
            if let Some(&bad) = hood.iter().find(|&&j| j >= r) {
                return Err(NnError::Index {
                    op: "neighbor_mean",
                    index: bad,
                    len: r,
                });
            }
            let o = out.row_mut(i);
            o.copy_from_slice(t.row(hood[0]));
            for &j in &hood[1..] {
                for (a, b) in o.iter_mut().zip(t.row(j)) {
                    *a += b;
                }
            }
            let n = hood.len() as f64;
            o.iter_mut().for_each(|a| *a /= n);
        }
        Ok(self.push(out, Op::NeighborMean(x, hoods.to_vec())))
    }

    /// Mean softmax cross-entropy over `(row, class)` targets. With no targets
    /// the loss is 0 and contributes no gradient.
    pub fn cross_entropy(&mut self, logits: Var, targets: &[(usize, usize)]) -> Result<Var> {
        let t = self.value(logits);
        let (r, c) = (t.rows(), t.cols());
        let mut probs = Vec::with_capacity(targets.len() * c);
        let mut loss = 0.0;
        for &(row, class) in targets {
            if row >= r || class >= c {
                return Err(NnError::Index {
                    op: "cross_entropy",
                    index: if row >= r { row } else { class },
                    len: if row >= r { r } else { c },
                });
            }
            let start = probs.len();
            probs.extend_from_slice(t.row(row));
            let p = &mut probs[start..];
            let lse = log_sum_exp(p);
            loss += lse - p[class];
            softmax_in_place(p);
        }
        let n = targets.len().max(1) as f64;
        Ok(self.push(
            Tensor::scalar(loss / n),
            Op::CrossEntropy {
                logits,
                targets: targets.to_vec(),
                probs,
            },
        ))
    }

    pub fn mean(&mut self, x: Var) -> Var {
        let t = self.value(x);
        let m = if t.is_empty() {
            0.0
        } else {
            t.data().iter().sum::<f64>() / t.len() as f64
        };
        self.push(Tensor::scalar(m), Op::Mean(x))
    }

    pub fn sum(&mut self, x: Var) -> Var {
        let s = self.value(x).data().iter().sum::<f64>();
        self.push(Tensor::scalar(s), Op::Sum(x))
    }

    /// Reverse pass from a one-element `loss`.
    pub fn backward(&self, loss: Var, n_params: usize) -> Result<Gradients> {
        let lt = self.value(loss);
        if lt.len() != 1 {
            return Err(NnError::Shape {
                op: "backward(loss must be scalar)",
                left: lt.shape().to_vec(),
                right: vec![1],
            });
        }
        let mut grads: Vec<Option<Tensor>> = vec![None; self.nodes.len()];
        grads[loss.0] = Some(Tensor::from_vec(lt.shape(), vec![1.0])?);
        let mut out = Gradients::new(n_params);

        for idx in (0..=loss.0).rev() {
            let Some(g) = grads[idx].take() else { continue };
            let node = &self.nodes[idx];
            match &node.op {
                Op::Input => {}
                Op::Param(id) => out.add(*id, g),
                Op::MatMul(a, b) => {
                    let (ta, tb) = (self.value(*a), self.value(*b));
                    let (m, k, n) = (ta.rows(), ta.cols(), tb.cols());
                    let mut ga = Tensor::zeros(ta.shape());
                    gemm(m, n, k, g.data(), false, tb.data(), true, ga.data_mut(), false);
                    let mut gb = Tensor::zeros(tb.shape());
                    gemm(k, m, n, ta.data(), true, g.data(), false, gb.data_mut(), false);
                    acc(&mut grads, *a, ga);
                    acc(&mut grads, *b, gb);
                }
                Op::Add(a, b) => {
                    acc(&mut grads, *a, g.clone());
                    acc(&mut grads, *b, g);
                }
                Op::AddRow(x, b) => {
                    let tb = self.value(*b);
                    let c = tb.len();
                    let mut gb = Tensor::zeros(tb.shape());
                    for row in g.data().chunks(c.max(1)) {
                        for (o, v) in gb.data_mut().iter_mut().zip(row) {
                            *o += v;
                        }
                    }
                    acc(&mut grads, *b, gb);
                    acc(&mut grads, *x, g);
                }
                Op::Scale(x, s) => {
                    let mut gx = g;
                    gx.data_mut().iter_mut().for_each(|v| *v *= s);
                    acc(&mut grads, *x, gx);
                }
                Op::Gather(src, ix) => {
                    let ts = self.value(*src);
                    let mut gs = Tensor::zeros(ts.shape());
                    for (r, &i) in ix.iter().enumerate() {
                        for (o, v) in gs.row_mut(i).iter_mut().zip(g.row(r)) {
                            *o += v;
                        }
                    }
                    acc(&mut grads, *src, gs);
                }
                Op::ConcatCols(a, b) => {
                    let (ta, tb) = (self.value(*a), self.value(*b));
                    let (ca, cb) = (ta.cols(), tb.cols());
                    let mut ga = Tensor::zeros(ta.shape());
                    let mut gbt = Tensor::zeros(tb.shape());
                    for r in 0..ta.rows() {
                        let gr = g.row(r);
                        ga.row_mut(r).copy_from_slice(&gr[..ca]);
                        gbt.row_mut(r).copy_from_slice(&gr[ca..ca + cb]);
                    }
                    acc(&mut grads, *a, ga);
                    acc(&mut grads, *b, gbt);
                }
                Op::Elu(x) => {
                    let tx = self.value(*x);
                    let mut gx = g;
                    for (o, &v) in gx.data_mut().iter_mut().zip(tx.data()) {
                        if v <= 0.0 {
                            *o *= v.exp();
                        }
                    }
                    acc(&mut grads, *x, gx);
                }
                Op::Gelu(x) => {
                    let tx = self.value(*x);
                    let mut gx = g;
                    for (o, &v) in gx.data_mut().iter_mut().zip(tx.data()) {
                        let u = GELU_C * (v + 0.044715 * v * v * v);
                        let t = u.tanh();
                        let du = GELU_C * (1.0 + 3.0 * 0.044715 * v * v);
                        *o *= 0.5 * (1.0 + t) + 0.5 * v * (1.0 - t * t) * du;
                    }
                    acc(&mut grads, *x, gx);
                }
                Op::LayerNorm {
                    x,
                    gamma,
                    beta,
                    xhat,
                    inv_std,
                } => {
                    let tx = self.value(*x);
                    let tg = self.value(*gamma);
                    let (r, c) = (tx.rows(), tx.cols());
                    let mut gg = Tensor::zeros(tg.shape());
                    let mut gbeta = Tensor::zeros(tg.shape());
                    let mut gx = Tensor::zeros(tx.shape());
                    let mut dxhat = vec![0.0; c];
                    for i in 0..r {
                        let gr = g.row(i);
                        let xh = &xhat[i * c..(i + 1) * c];
                        let mut s1 = 0.0;
                        let mut s2 = 0.0;
                        for j in 0..c {
                            gg.data_mut()[j] += gr[j] * xh[j];
                            gbeta.data_mut()[j] += gr[j];
                            dxhat[j] = gr[j] * tg.data()[j];
                            s1 += dxhat[j];
                            s2 += dxhat[j] * xh[j];
                        }
                        let k = inv_std[i] / c as f64;
                        let o = gx.row_mut(i);
                        for j in 0..c {
                            o[j] = k * (c as f64 * dxhat[j] - s1 - xh[j] * s2);
                        }
                    }
                    acc(&mut grads, *x, gx);
                    acc(&mut grads, *gamma, gg);
                    acc(&mut grads, *beta, gbeta);
                }
                Op::Dropout(x, mask) => {
                    let mut gx = g;
                    for (o, m) in gx.data_mut().iter_mut().zip(mask) {
                        *o *= m;
                    }
                    acc(&mut grads, *x, gx);
                }
                Op::Softmax(x) => {
                    let y = &node.value;
                    let c = y.cols().max(1);
                    let mut gx = g;
                    for (grow, yrow) in gx.data_mut().chunks_mut(c).zip(y.data().chunks(c)) {
                        let s: f64 = grow.iter().zip(yrow).map(|(a, b)| a * b).sum();
                        for (o, yv) in grow.iter_mut().zip(yrow) {
                            *o = yv * (*o - s);
                        }
                    }
                    acc(&mut grads, *x, gx);
                }
                Op::Attention {
                    q,
                    k,
                    v,
                    segments,
                    heads,
                    probs,
                } => {
                    let (tq, tk, tv) = (self.value(*q), self.value(*k), self.value(*v));
                    let d = tq.cols();
                    let dh = d / heads;
                    let scale = 1.0 / (dh as f64).sqrt();
                    let mut gq = Tensor::zeros(tq.shape());
                    let mut gk = Tensor::zeros(tk.shape());
                    let mut gv = Tensor::zeros(tv.shape());
                    let (qd, kd, vd, gd) = (tq.data(), tk.data(), tv.data(), g.data());
                    let mut pi = 0;
                    let mut dp = Vec::new();
                    for &(s, l) in segments {
                        for h in 0..*heads {
                            let off = h * dh;
                            for a in 0..l {
                                let p = &probs[pi..pi + l];
                                pi += l;
                                let ga = &gd[(s + a) * d + off..(s + a) * d + off + dh];
                                dp.clear();
                                for (b, &pb) in p.iter().enumerate() {
                                    let vb = (s + b) * d + off;
                                    dp.push(dot(ga, &vd[vb..vb + dh]));
                                    let gvb = &mut gv.data_mut()[vb..vb + dh];
                                    for (o, x) in gvb.iter_mut().zip(ga) {
                                        *o += pb * x;
                                    }
                                }
                                let cdot: f64 = p.iter().zip(&dp).map(|(a, b)| a * b).sum();
                                let qa = (s + a) * d + off;
                                for (b, &pb) in p.iter().enumerate() {
                                    let ds = pb * (dp[b] - cdot) * scale;
                                    if ds == 0.0 {
                                        continue;
                                    }
                                    let kb = (s + b) * d + off;
                                    let gqa = &mut gq.data_mut()[qa..qa + dh];
                                    for (o, x) in gqa.iter_mut().zip(&kd[kb..kb + dh]) {
                                        *o += ds * x;
                                    }
                                    let gkb = &mut gk.data_mut()[kb..kb + dh];
                                    for (o, x) in gkb.iter_mut().zip(&qd[qa..qa + dh]) {
                                        *o += ds * x;
                                    }
                                }
                            }
                        }
                    }
                    acc(&mut grads, *q, gq);
                    acc(&mut grads, *k, gk);
                    acc(&mut grads, *v, gv);
                }
                Op::NeighborMean(x, hoods) => {
                    let tx = self.value(*x);
                    let mut gx = Tensor::zeros(tx.shape());
                    for (i, hood) in hoods.iter().enumerate() {
                        let n = hood.len() as f64;
                        let gi: Vec<f64> = g.row(i).iter().map(|v| v / n).collect();
                        for &j in hood {
                            for (o, v) in gx.row_mut(j).iter_mut().zip(&gi) {
                                *o += v;
                            }
                        }
                    }
                    acc(&mut grads, *x, gx);
                }
                Op::CrossEntropy {
                    logits,
                    targets,
                    probs,
                } => {
                    if targets.is_empty() {
                        continue;
                    }
                    let tl = self.value(*logits);
                    let c = tl.cols();
                    let w = g.item() / targets.len() as f64;
                    let mut gl = Tensor::zeros(tl.shape());
                    for (t, &(row, class)) in targets.iter().enumerate() {
                        let p = &probs[t * c..(t + 1) * c];
                        let o = gl.row_mut(row);
                        for j in 0..c {
                            o[j] += w * p[j];
                        }
                        o[class] -= w;
                    }
                    acc(&mut grads, *logits, gl);
                }
                Op::Mean(x) => {
                    let tx = self.value(*x);
                    let n = tx.len().max(1) as f64;
                    let mut gx = Tensor::zeros(tx.shape());
                    gx.fill(g.item() / n);
                    acc(&mut grads, *x, gx);
                }
                Op::Sum(x) => {
                    let tx = self.value(*x);
                    let mut gx = Tensor::zeros(tx.shape());
                    gx.fill(g.item());
                    acc(&mut grads, *x, gx);
                }
            }
        }
        Ok(out)
    }
}

fn acc(grads: &mut [Option<Tensor>], v: Var, g: Tensor) {
    match &mut grads[v.0] {
        Some(t) => t.add_assign(&g),
        slot @ None => *slot = Some(g),
    }
}

#[inline]
fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn elu(x: f64) -> f64 {
    if x > 0.0 {
        x
    } else {
        x.exp() - 1.0
    }
}

fn log_sum_exp(x: &[f64]) -> f64 {
    let m = x.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if !m.is_finite() {
        return m;
    }
    m + x.iter().map(|v| (v - m).exp()).sum::<f64>().ln()
}

/// Numerically stable softmax (max subtraction).
pub fn softmax_in_place(x: &mut [f64]) {
    if x.is_empty() {
        return;
    }
    let m = x.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let mut s = 0.0;
    for v in x.iter_mut() {
        *v = (*v - m).exp();
        s += *v;
    }
    for v in x.iter_mut() {
        *v /= s;
    }
}
