//! Central finite differences, used only by tests as an oracle for backprop.

use crate::diffcore::{Grads, ParamStore};

pub const STEP: f64 = 1e-5;

/// Relative error with a small denominator floor so exactly-zero components compare absolutely.
pub fn rel_err(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(1e-6)
}

pub fn numeric_grad(params: &ParamStore, loss: impl Fn(&ParamStore) -> f64) -> Vec<f64> {
    let base = params.flat();
    let mut probe = params.clone();
    let mut out = Vec::with_capacity(base.len());
    for i in 0..base.len() {
        let mut v = base.clone();
        v[i] = base[i] + STEP;
        probe.set_flat(&v).unwrap();
        let plus = loss(&probe);
        v[i] = base[i] - STEP;
        probe.set_flat(&v).unwrap();
        let minus = loss(&probe);
        out.push((plus - minus) / (2.0 * STEP));
    }
    out
}

/// Largest relative error between analytic and numeric gradients.
pub fn max_rel_err(grads: &Grads, params: &ParamStore, loss: impl Fn(&ParamStore) -> f64) -> f64 {
    let numeric = numeric_grad(params, loss);
    grads
        .flat()
        .iter()
        .zip(&numeric)
        .map(|(a, n)| rel_err(*a, *n))
        .fold(0.0, f64::max)
}
