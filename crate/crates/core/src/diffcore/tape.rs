use std::sync::atomic::{AtomicU64, Ordering};

use super::{Grads, NumArray, ParamStore};
use crate::{Error, Result};

static NEXT_TAPE: AtomicU64 = AtomicU64::new(1);

/// Handle to a value recorded on a [`Tape`].
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Var {
    id: usize,
    tape: u64,
}

#[derive(Debug)]
enum Op {
    Const,
    Param(String),
    Linear { x: usize, w: usize, b: usize },
    Conv1d { x: usize, k: usize, b: usize },
    Sigmoid(usize),
    Relu(usize),
    Abs(usize),
    Square(usize),
    Add(usize, usize),
    Sub(usize, usize),
    Mul(usize, usize),
    Scale(usize, f64),
    Shift(usize),
    Sum(usize),
    Mean(usize),
    RowSum(usize),
    Reshape(usize),
    Diff(usize),
    Gather(usize, Vec<usize>),
    CrossEntropy(usize, Vec<usize>),
}

struct Node {
    value: NumArray,
    op: Op,
}

/// Recording of a forward computation, replayed backwards for gradients.
pub struct Tape {
    id: u64,
    nodes: Vec<Node>,
}

impl Default for Tape {
    fn default() -> Self {
        Self::new()
    }
}

impl Tape {
    pub fn new() -> Self {
        Tape {
            id: NEXT_TAPE.fetch_add(1, Ordering::Relaxed),
            nodes: Vec::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn push(&mut self, value: NumArray, op: Op) -> Var {
        self.nodes.push(Node { value, op });
        Var {
            id: self.nodes.len() - 1,
            tape: self.id,
        }
    }

    fn idx(&self, v: Var) -> Result<usize> {
        if v.tape != self.id || v.id >= self.nodes.len() {
            return Err(Error::NotInGraph);
        }
        Ok(v.id)
    }

    fn val(&self, i: usize) -> &NumArray {
        &self.nodes[i].value
    }

    pub fn value(&self, v: Var) -> Result<&NumArray> {
        Ok(self.val(self.idx(v)?))
    }

    pub fn constant(&mut self, value: NumArray) -> Var {
        self.push(value, Op::Const)
    }

    /// Records the current value of a stored parameter as a differentiable leaf.
    pub fn param(&mut self, store: &ParamStore, key: &str) -> Result<Var> {
        let value = store.get(key)?.clone();
        Ok(self.push(value, Op::Param(key.to_string())))
    }

    /// `x·Wᵀ + b` for `x` of shape `[n, in]` or `[in]`, `W` of `[out, in]`, `b` of `[out]`.
    pub fn linear(&mut self, x: Var, w: Var, b: Var) -> Result<Var> {
        let (xi, wi, bi) = (self.idx(x)?, self.idx(w)?, self.idx(b)?);
        let (xv, wv, bv) = (self.val(xi), self.val(wi), self.val(bi));
        if wv.shape().len() != 2 {
            return Err(Error::shape("dense weight must be a matrix"));
        }
        let (out, inp) = (wv.shape()[0], wv.shape()[1]);
        if xv.cols() != inp || xv.shape().is_empty() {
            return Err(Error::shape(format!(
                "dense layer expects {inp} inputs, got shape {:?}",
                xv.shape()
            )));
        }
        if bv.len() != out {
            return Err(Error::shape(format!("bias has {} entries, want {out}", bv.len())));
        }
        let n = xv.rows();
        let mut y = Vec::with_capacity(n * out);
        for i in 0..n {
            let xr = xv.row(i);
            for o in 0..out {
                let wr = wv.row(o);
                let dot: f64 = xr.iter().zip(wr).map(|(a, b)| a * b).sum();
                y.push(dot + bv.data()[o]);
            }
        }
        let shape = if xv.shape().len() == 1 { vec![out] } else { vec![n, out] };
        let value = NumArray::new(shape, y)?;
        Ok(self.push(value, Op::Linear { x: xi, w: wi, b: bi }))
    }

    /// Valid-mode correlation of every row of `x` with kernel `k`, plus scalar bias `b`.
    pub fn conv1d(&mut self, x: Var, k: Var, b: Var) -> Result<Var> {
        let (xi, ki, bi) = (self.idx(x)?, self.idx(k)?, self.idx(b)?);
        let (xv, kv, bv) = (self.val(xi), self.val(ki), self.val(bi));
        let width = kv.len();
        let t = xv.cols();
        if xv.shape().is_empty() || t < width {
            return Err(Error::shape(format!(
                "convolution of width {width} needs at least {width} samples, got {t}"
            )));
        }
        if bv.len() != 1 {
            return Err(Error::shape("convolution bias must be a single value"));
        }
        let out_t = t - width + 1;
        let n = xv.rows();
        let mut y = Vec::with_capacity(n * out_t);
        for i in 0..n {
            let xr = xv.row(i);
            for s in 0..out_t {
                let acc: f64 = kv.data().iter().zip(&xr[s..s + width]).map(|(a, b)| a * b).sum();
                y.push(acc + bv.data()[0]);
            }
        }
        let shape = if xv.shape().len() == 1 {
            vec![out_t]
        } else {
            vec![n, out_t]
        };
        let value = NumArray::new(shape, y)?;
        Ok(self.push(value, Op::Conv1d { x: xi, k: ki, b: bi }))
    }

    fn unary(&mut self, a: Var, f: impl Fn(f64) -> f64, op: impl FnOnce(usize) -> Op) -> Result<Var> {
        let ai = self.idx(a)?;
        let value = self.val(ai).map(f);
        Ok(self.push(value, op(ai)))
    }

    pub fn sigmoid(&mut self, a: Var) -> Result<Var> {
        self.unary(a, super::sigmoid, Op::Sigmoid)
    }

    pub fn relu(&mut self, a: Var) -> Result<Var> {
        self.unary(a, super::relu, Op::Relu)
    }

    pub fn abs(&mut self, a: Var) -> Result<Var> {
        self.unary(a, f64::abs, Op::Abs)
    }

    pub fn square(&mut self, a: Var) -> Result<Var> {
        self.unary(a, |v| v * v, Op::Square)
    }

    pub fn scale(&mut self, a: Var, c: f64) -> Result<Var> {
        self.unary(a, |v| v * c, |i| Op::Scale(i, c))
    }

    /// Adds a constant to every element.
    pub fn shift(&mut self, a: Var, c: f64) -> Result<Var> {
        self.unary(a, |v| v + c, Op::Shift)
    }

    fn binary(&mut self, a: Var, b: Var, f: impl Fn(f64, f64) -> f64, op: fn(usize, usize) -> Op) -> Result<Var> {
        let (ai, bi) = (self.idx(a)?, self.idx(b)?);
        let (av, bv) = (self.val(ai), self.val(bi));
        if av.shape() != bv.shape() {
            return Err(Error::shape(format!(
                "element-wise op on {:?} and {:?}",
                av.shape(),
                bv.shape()
            )));
        }
        let data = av.data().iter().zip(bv.data()).map(|(&x, &y)| f(x, y)).collect();
        let value = NumArray::new(av.shape().to_vec(), data)?;
        Ok(self.push(value, op(ai, bi)))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary(a, b, |x, y| x + y, Op::Add)
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary(a, b, |x, y| x - y, Op::Sub)
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary(a, b, |x, y| x * y, Op::Mul)
    }

    pub fn sum(&mut self, a: Var) -> Result<Var> {
        let ai = self.idx(a)?;
        let value = NumArray::scalar(self.val(ai).sum());
        Ok(self.push(value, Op::Sum(ai)))
    }

    pub fn mean(&mut self, a: Var) -> Result<Var> {
        let ai = self.idx(a)?;
        let v = self.val(ai);
        if v.is_empty() {
            return Err(Error::shape("mean of an empty array"));
        }
        let value = NumArray::scalar(v.sum() / v.len() as f64);
        Ok(self.push(value, Op::Mean(ai)))
    }

    /// `[n, m] -> [n]` row sums.
    pub fn row_sum(&mut self, a: Var) -> Result<Var> {
        let ai = self.idx(a)?;
        let v = self.val(ai);
        let sums = (0..v.rows()).map(|i| v.row(i).iter().sum()).collect();
        Ok(self.push(NumArray::vector(sums), Op::RowSum(ai)))
    }

    pub fn reshape(&mut self, a: Var, shape: &[usize]) -> Result<Var> {
        let ai = self.idx(a)?;
        let value = self.val(ai).clone().reshape(shape)?;
        Ok(self.push(value, Op::Reshape(ai)))
    }

    /// Forward differences along each row: `[n, T] -> [n, T-1]`.
    pub fn diff(&mut self, a: Var) -> Result<Var> {
        let ai = self.idx(a)?;
        let v = self.val(ai);
        let (n, t) = (v.rows(), v.cols());
        if t < 2 || v.shape().len() != 2 {
            return Err(Error::shape("diff needs a matrix with at least two columns"));
        }
        let mut data = Vec::with_capacity(n * (t - 1));
        for i in 0..n {
            let r = v.row(i);
            data.extend(r.windows(2).map(|w| w[1] - w[0]));
        }
        let value = NumArray::matrix(n, t - 1, data)?;
        Ok(self.push(value, Op::Diff(ai)))
    }

    /// Picks `a[i, cols[i]]` from each row: `[n, m] -> [n]`.
    pub fn gather(&mut self, a: Var, cols: &[usize]) -> Result<Var> {
        let ai = self.idx(a)?;
        let v = self.val(ai);
        if cols.len() != v.rows() || cols.iter().any(|&c| c >= v.cols()) {
            return Err(Error::shape("gather indices do not match the array"));
        }
        let data = cols.iter().enumerate().map(|(i, &c)| v.row(i)[c]).collect();
        Ok(self.push(NumArray::vector(data), Op::Gather(ai, cols.to_vec())))
    }

    /// Mean softmax cross-entropy of row logits `[n, C]` against class labels.
    pub fn cross_entropy(&mut self, logits: Var, labels: &[usize]) -> Result<Var> {
        let ai = self.idx(logits)?;
        let v = self.val(ai);
        if labels.len() != v.rows() || labels.iter().any(|&c| c >= v.cols()) || labels.is_empty() {
            return Err(Error::shape("labels do not match the logits"));
        }
        let mut total = 0.0;
        for (i, &label) in labels.iter().enumerate() {
            let r = v.row(i);
            total += log_sum_exp(r) - r[label];
        }
        let value = NumArray::scalar(total / labels.len() as f64);
        Ok(self.push(value, Op::CrossEntropy(ai, labels.to_vec())))
    }

    /// Gradient of scalar `loss` with respect to an arbitrary recorded value.
    pub fn grad_wrt(&self, loss: Var, target: Var) -> Result<NumArray> {
        let t = self.idx(target)?;
        let adj = self.backward(loss)?;
        let shape = self.val(t).shape().to_vec();
        let data = adj[t].clone().unwrap_or_else(|| vec![0.0; self.val(t).len()]);
        NumArray::new(shape, data)
    }

    /// Gradients of scalar `loss` for every parameter of `store`; untouched
    /// parameters get zeros.
    pub fn gradients(&self, loss: Var, store: &ParamStore) -> Result<Grads> {
        let adj = self.backward(loss)?;
        let mut grads = Grads::zeros_like(store);
        for (i, node) in self.nodes.iter().enumerate() {
            if let (Op::Param(key), Some(g)) = (&node.op, &adj[i]) {
                grads.accumulate(key, g)?;
            }
        }
        Ok(grads)
    }

    fn backward(&self, loss: Var) -> Result<Vec<Option<Vec<f64>>>> {
        let li = self.idx(loss)?;
        if self.val(li).len() != 1 {
            return Err(Error::shape("loss must be a scalar"));
        }
        let mut adj: Vec<Option<Vec<f64>>> = vec![None; li + 1];
        adj[li] = Some(vec![1.0]);
        for i in (0..=li).rev() {
            let Some(g) = adj[i].take() else { continue };
            self.propagate(i, &g, &mut adj);
            adj[i] = Some(g);
        }
        Ok(adj)
    }

    fn propagate(&self, i: usize, g: &[f64], adj: &mut [Option<Vec<f64>>]) {
        let node = &self.nodes[i];
        let out = &node.value;
        match &node.op {
            Op::Const | Op::Param(_) => {}
            Op::Linear { x, w, b } => {
                let (xv, wv) = (self.val(*x), self.val(*w));
                let (outs, inp) = (wv.shape()[0], wv.shape()[1]);
                let n = xv.rows();
                let mut gx = vec![0.0; n * inp];
                let mut gw = vec![0.0; outs * inp];
                let mut gb = vec![0.0; outs];
                for r in 0..n {
                    let xr = xv.row(r);
                    for o in 0..outs {
                        let d = g[r * outs + o];
                        if d == 0.0 {
                            continue;
                        }
                        gb[o] += d;
                        let wr = wv.row(o);
                        let gxr = &mut gx[r * inp..(r + 1) * inp];
                        let gwr = &mut gw[o * inp..(o + 1) * inp];
                        for j in 0..inp {
                            gxr[j] += d * wr[j];
                            gwr[j] += d * xr[j];
                        }
                    }
                }
                add_into(adj, *x, &gx);
                add_into(adj, *w, &gw);
                add_into(adj, *b, &gb);
            }
            Op::Conv1d { x, k, b } => {
                let (xv, kv) = (self.val(*x), self.val(*k));
                let width = kv.len();
                let (n, t) = (xv.rows(), xv.cols());
                let out_t = t - width + 1;
                let mut gx = vec![0.0; n * t];
                let mut gk = vec![0.0; width];
                let mut gb = 0.0;
                for r in 0..n {
                    let xr = xv.row(r);
                    for s in 0..out_t {
                        let d = g[r * out_t + s];
                        gb += d;
                        for u in 0..width {
                            gk[u] += d * xr[s + u];
                            gx[r * t + s + u] += d * kv.data()[u];
                        }
                    }
                }
                add_into(adj, *x, &gx);
                add_into(adj, *k, &gk);
                add_into(adj, *b, &[gb]);
            }
            Op::Sigmoid(a) => {
                let d: Vec<f64> = out.data().iter().zip(g).map(|(y, g)| g * y * (1.0 - y)).collect();
                add_into(adj, *a, &d);
            }
            Op::Relu(a) => {
                let av = self.val(*a);
                let d: Vec<f64> = av
                    .data()
                    .iter()
                    .zip(g)
                    .map(|(x, g)| if *x > 0.0 { *g } else { 0.0 })
                    .collect();
                add_into(adj, *a, &d);
            }
            Op::Abs(a) => {
                let av = self.val(*a);
                let d: Vec<f64> = av.data().iter().zip(g).map(|(x, g)| g * sign(*x)).collect();
                add_into(adj, *a, &d);
            }
            Op::Square(a) => {
                let av = self.val(*a);
                let d: Vec<f64> = av.data().iter().zip(g).map(|(x, g)| 2.0 * x * g).collect();
                add_into(adj, *a, &d);
            }
            Op::Add(a, b) => {
                add_into(adj, *a, g);
                add_into(adj, *b, g);
            }
            Op::Sub(a, b) => {
                add_into(adj, *a, g);
                let neg: Vec<f64> = g.iter().map(|v| -v).collect();
                add_into(adj, *b, &neg);
            }
            Op::Mul(a, b) => {
                let (av, bv) = (self.val(*a), self.val(*b));
                let da: Vec<f64> = bv.data().iter().zip(g).map(|(y, g)| y * g).collect();
                let db: Vec<f64> = av.data().iter().zip(g).map(|(x, g)| x * g).collect();
                add_into(adj, *a, &da);
                add_into(adj, *b, &db);
            }
            Op::Scale(a, c) => {
                let d: Vec<f64> = g.iter().map(|v| v * c).collect();
                add_into(adj, *a, &d);
            }
            Op::Shift(a) | Op::Reshape(a) => add_into(adj, *a, g),
            Op::Sum(a) => {
                let n = self.val(*a).len();
                add_into(adj, *a, &vec![g[0]; n]);
            }
            Op::Mean(a) => {
                let n = self.val(*a).len();
                add_into(adj, *a, &vec![g[0] / n as f64; n]);
            }
            Op::RowSum(a) => {
                let av = self.val(*a);
                let (n, m) = (av.rows(), av.cols());
                let d: Vec<f64> = (0..n * m).map(|j| g[j / m]).collect();
                add_into(adj, *a, &d);
            }
            Op::Diff(a) => {
                let av = self.val(*a);
                let (n, t) = (av.rows(), av.cols());
                let mut d = vec![0.0; n * t];
                for r in 0..n {
                    for s in 0..t - 1 {
                        let gv = g[r * (t - 1) + s];
                        d[r * t + s + 1] += gv;
                        d[r * t + s] -= gv;
                    }
                }
                add_into(adj, *a, &d);
            }
            Op::Gather(a, cols) => {
                let av = self.val(*a);
                let m = av.cols();
                let mut d = vec![0.0; av.len()];
                for (r, &c) in cols.iter().enumerate() {
                    d[r * m + c] += g[r];
                }
                add_into(adj, *a, &d);
            }
            Op::CrossEntropy(a, labels) => {
                let av = self.val(*a);
                let m = av.cols();
                let n = labels.len() as f64;
                let mut d = vec![0.0; av.len()];
                for (r, &label) in labels.iter().enumerate() {
                    let row = av.row(r);
                    let lse = log_sum_exp(row);
                    for c in 0..m {
                        let p = (row[c] - lse).exp();
                        let target = if c == label { 1.0 } else { 0.0 };
                        d[r * m + c] = g[0] * (p - target) / n;
                    }
                }
                add_into(adj, *a, &d);
            }
        }
    }
}

fn add_into(adj: &mut [Option<Vec<f64>>], i: usize, g: &[f64]) {
    match &mut adj[i] {
        Some(acc) => acc.iter_mut().zip(g).for_each(|(a, b)| *a += b),
        slot @ None => *slot = Some(g.to_vec()),
    }
}

fn sign(x: f64) -> f64 {
    if x > 0.0 {
        1.0
    } else if x < 0.0 {
        -1.0
    } else {
        0.0
    }
}

pub(crate) fn log_sum_exp(xs: &[f64]) -> f64 {
    let m = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    m + xs.iter().map(|x| (x - m).exp()).sum::<f64>().ln()
}
