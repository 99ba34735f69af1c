use super::{NumArray, ParamStore, Tape, Var};
use crate::{Error, Result};

/// Kernel width of every convolution in the crate.
pub const CONV_WIDTH: usize = 5;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Activation {
    Identity,
    Relu,
    Sigmoid,
}

impl Activation {
    pub fn apply(self, v: f64) -> f64 {
        match self {
            Activation::Identity => v,
            Activation::Relu => relu(v),
            Activation::Sigmoid => sigmoid(v),
        }
    }

    pub fn record(self, tape: &mut Tape, v: Var) -> Result<Var> {
        match self {
            Activation::Identity => Ok(v),
            Activation::Relu => tape.relu(v),
            Activation::Sigmoid => tape.sigmoid(v),
        }
    }
}

pub fn sigmoid(v: f64) -> f64 {
    if v >= 0.0 {
        1.0 / (1.0 + (-v).exp())
    } else {
        let e = v.exp();
        e / (1.0 + e)
    }
}

pub fn relu(v: f64) -> f64 {
    v.max(0.0)
}

/// `W·x + b` for the dense layer stored under `prefix`, applied to a vector
/// or to every row of a matrix.
pub fn dense_forward(params: &ParamStore, prefix: &str, x: &NumArray) -> Result<NumArray> {
    let w = params.get(&format!("{prefix}.w"))?;
    let b = params.get(&format!("{prefix}.b"))?;
    let (out, inp) = (w.shape()[0], w.shape()[1]);
    if x.shape().is_empty() || x.cols() != inp {
        return Err(Error::shape(format!(
            "layer `{prefix}` expects {inp} inputs, got shape {:?}",
            x.shape()
        )));
    }
    let n = x.rows();
    let mut y = Vec::with_capacity(n * out);
    for i in 0..n {
        let xr = x.row(i);
        for o in 0..out {
            let dot: f64 = w.row(o).iter().zip(xr).map(|(a, b)| a * b).sum();
            y.push(dot + b.data()[o]);
        }
    }
    let shape = if x.shape().len() == 1 { vec![out] } else { vec![n, out] };
    NumArray::new(shape, y)
}

/// Width-5 valid correlation with stride 1 followed by a sigmoid, per row.
pub fn conv1d_forward(params: &ParamStore, prefix: &str, x: &NumArray) -> Result<NumArray> {
    let k = params.get(&format!("{prefix}.k"))?;
    let b = params.get(&format!("{prefix}.b"))?.data()[0];
    let width = k.len();
    let t = x.cols();
    if x.shape().is_empty() || t < width {
        return Err(Error::shape(format!(
            "convolution `{prefix}` needs at least {width} samples, got {t}"
        )));
    }
    let out_t = t - width + 1;
    let n = x.rows();
    let mut y = Vec::with_capacity(n * out_t);
    for i in 0..n {
        let xr = x.row(i);
        for s in 0..out_t {
            let acc: f64 = k.data().iter().zip(&xr[s..s + width]).map(|(a, b)| a * b).sum();
            y.push(sigmoid(acc + b));
        }
    }
    let shape = if x.shape().len() == 1 {
        vec![out_t]
    } else {
        vec![n, out_t]
    };
    NumArray::new(shape, y)
}

/// Records the dense layer under `prefix` plus its activation.
pub(crate) fn dense(tape: &mut Tape, params: &ParamStore, prefix: &str, x: Var, act: Activation) -> Result<Var> {
    let w = tape.param(params, &format!("{prefix}.w"))?;
    let b = tape.param(params, &format!("{prefix}.b"))?;
    let y = tape.linear(x, w, b)?;
    act.record(tape, y)
}

/// Like [`dense`] but the layer's parameters are recorded as constants.
pub(crate) fn dense_frozen(tape: &mut Tape, params: &ParamStore, prefix: &str, x: Var, act: Activation) -> Result<Var> {
    let w = tape.constant(params.get(&format!("{prefix}.w"))?.clone());
    let b = tape.constant(params.get(&format!("{prefix}.b"))?.clone());
    let y = tape.linear(x, w, b)?;
    act.record(tape, y)
}

/// Records the sigmoid convolution under `prefix`; `frozen` records its
/// parameters as constants.
pub(crate) fn conv(tape: &mut Tape, params: &ParamStore, prefix: &str, x: Var, frozen: bool) -> Result<Var> {
    let (kk, bk) = (format!("{prefix}.k"), format!("{prefix}.b"));
    let (k, b) = if frozen {
        (
            tape.constant(params.get(&kk)?.clone()),
            tape.constant(params.get(&bk)?.clone()),
        )
    } else {
        (tape.param(params, &kk)?, tape.param(params, &bk)?)
    };
    let y = tape.conv1d(x, k, b)?;
    tape.sigmoid(y)
}
