use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use rand::Rng as _;

use super::NumArray;
use crate::rng::Rng;
use crate::{Error, Result};

pub const PARAMS_HEADER: &str = "diffcore-params v1";

/// Named parameter arrays plus the number of optimizer steps applied so far.
#[derive(Clone, Debug, PartialEq, Default)]
pub struct ParamStore {
    params: BTreeMap<String, NumArray>,
    step: u64,
}

impl ParamStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, key: impl Into<String>, value: NumArray) {
        self.params.insert(key.into(), value);
    }

    pub fn get(&self, key: &str) -> Result<&NumArray> {
        self.params
            .get(key)
            .ok_or_else(|| Error::invalid(format!("unknown parameter `{key}`")))
    }

    pub fn get_mut(&mut self, key: &str) -> Result<&mut NumArray> {
        self.params
            .get_mut(key)
            .ok_or_else(|| Error::invalid(format!("unknown parameter `{key}`")))
    }

    pub fn contains(&self, key: &str) -> bool {
        self.params.contains_key(key)
    }

    pub fn keys(&self) -> impl Iterator<Item = &str> {
        self.params.keys().map(String::as_str)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &NumArray)> {
        self.params.iter().map(|(k, v)| (k.as_str(), v))
    }

    pub fn iter_mut(&mut self) -> impl Iterator<Item = (&str, &mut NumArray)> {
        self.params.iter_mut().map(|(k, v)| (k.as_str(), v))
    }

    pub fn len(&self) -> usize {
        self.params.len()
    }

    pub fn is_empty(&self) -> bool {
        self.params.is_empty()
    }

    pub fn step(&self) -> u64 {
        self.step
    }

    pub(crate) fn bump_step(&mut self) {
        self.step += 1;
    }

    /// Total number of scalar parameters.
    pub fn num_values(&self) -> usize {
        self.params.values().map(NumArray::len).sum()
    }

    /// Adds a dense layer `{prefix}.w` (out×in) and `{prefix}.b` (out), drawn
    /// uniformly from ±1/√in.
    pub fn init_dense(&mut self, prefix: &str, inputs: usize, outputs: usize, rng: &mut Rng) {
        let bound = 1.0 / (inputs as f64).sqrt();
        let w = (0..inputs * outputs)
            .map(|_| rng.random_range(-bound..=bound))
            .collect();
        let b = (0..outputs).map(|_| rng.random_range(-bound..=bound)).collect();
        self.insert(
            format!("{prefix}.w"),
            NumArray::matrix(outputs, inputs, w).expect("sized by construction"),
        );
        self.insert(format!("{prefix}.b"), NumArray::vector(b));
    }

    /// Adds a single-channel 1-D convolution `{prefix}.k` (width) and `{prefix}.b` (1).
    pub fn init_conv(&mut self, prefix: &str, width: usize, rng: &mut Rng) {
        let bound = 1.0 / (width as f64).sqrt();
        let k = (0..width).map(|_| rng.random_range(-bound..=bound)).collect();
        self.insert(format!("{prefix}.k"), NumArray::vector(k));
        self.insert(
            format!("{prefix}.b"),
            NumArray::vector(vec![rng.random_range(-bound..=bound)]),
        );
    }

    /// Clamps every value into `[-c, c]`.
    pub fn clip(&mut self, c: f64) {
        for v in self.params.values_mut() {
            for x in v.data_mut() {
                *x = x.clamp(-c, c);
            }
        }
    }

    pub fn max_abs(&self) -> f64 {
        self.params.values().fold(0.0, |m, v| m.max(v.max_abs()))
    }

    pub fn is_finite(&self) -> bool {
        self.params.values().all(NumArray::is_finite)
    }

    /// Flat view in key order; pairs with [`ParamStore::set_flat`].
    pub fn flat(&self) -> Vec<f64> {
        self.params.values().flat_map(|v| v.data().iter().copied()).collect()
    }

    pub fn set_flat(&mut self, values: &[f64]) -> Result<()> {
        if values.len() != self.num_values() {
            return Err(Error::shape(format!(
                "flat vector has {} values, store has {}",
                values.len(),
                self.num_values()
            )));
        }
        let mut offset = 0;
        for v in self.params.values_mut() {
            let n = v.len();
            v.data_mut().copy_from_slice(&values[offset..offset + n]);
            offset += n;
        }
        Ok(())
    }

    pub fn to_text(&self) -> String {
        let mut out = String::new();
        writeln!(out, "{PARAMS_HEADER}").unwrap();
        writeln!(out, "step {}", self.step).unwrap();
        for (key, value) in &self.params {
            write!(out, "param {key} {}", value.shape().len()).unwrap();
            for d in value.shape() {
                write!(out, " {d}").unwrap();
            }
            out.push('\n');
            let vals: Vec<String> = value.data().iter().map(|v| format!("{v:?}")).collect();
            writeln!(out, "{}", vals.join(" ")).unwrap();
        }
        out
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let ctx = "parameter file";
        let mut lines = text.lines();
        if lines.next().map(str::trim) != Some(PARAMS_HEADER) {
            return Err(Error::parse(ctx, format!("missing `{PARAMS_HEADER}` header")));
        }
        let step = lines
            .next()
            .and_then(|l| l.strip_prefix("step "))
            .and_then(|s| s.trim().parse().ok())
            .ok_or_else(|| Error::parse(ctx, "missing step line"))?;
        let mut store = ParamStore {
            params: BTreeMap::new(),
            step,
        };
        while let Some(line) = lines.next() {
            if line.trim().is_empty() {
                continue;
            }
            let mut parts = line.split_whitespace();
            if parts.next() != Some("param") {
                return Err(Error::parse(ctx, format!("expected `param`, got `{line}`")));
            }
            let key = parts
                .next()
                .ok_or_else(|| Error::parse(ctx, "missing key"))?
                .to_string();
            let nums: Vec<usize> = parts
                .map(|p| p.parse().map_err(|_| Error::parse(ctx, format!("bad dim `{p}`"))))
                .collect::<Result<_>>()?;
            let (&rank, dims) = nums.split_first().ok_or_else(|| Error::parse(ctx, "missing rank"))?;
            if dims.len() != rank {
                return Err(Error::parse(ctx, format!("rank {rank} with dims {dims:?}")));
            }
            let values: Vec<f64> = lines
                .next()
                .unwrap_or("")
                .split_whitespace()
                .map(|p| p.parse().map_err(|_| Error::parse(ctx, format!("bad value `{p}`"))))
                .collect::<Result<_>>()?;
            let array = NumArray::new(dims.to_vec(), values)?;
            store.params.insert(key, array);
        }
        Ok(store)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_text()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_text(&text)
    }
}

/// Gradients keyed like the [`ParamStore`] they were computed for.
#[derive(Clone, Debug, PartialEq)]
pub struct Grads {
    grads: BTreeMap<String, NumArray>,
}

impl Grads {
    pub fn zeros_like(store: &ParamStore) -> Self {
        Grads {
            grads: store
                .iter()
                .map(|(k, v)| (k.to_string(), NumArray::zeros(v.shape())))
                .collect(),
        }
    }

    pub fn get(&self, key: &str) -> Result<&NumArray> {
        self.grads
            .get(key)
            .ok_or_else(|| Error::invalid(format!("no gradient for `{key}`")))
    }

    pub(crate) fn accumulate(&mut self, key: &str, delta: &[f64]) -> Result<()> {
        let g = self
            .grads
            .get_mut(key)
            .ok_or_else(|| Error::invalid(format!("parameter `{key}` not in store")))?;
        if g.len() != delta.len() {
            return Err(Error::shape(format!("gradient for `{key}` has wrong size")));
        }
        for (a, d) in g.data_mut().iter_mut().zip(delta) {
            *a += d;
        }
        Ok(())
    }

    pub fn keys(&self) -> impl Iterator<Item = &str> {
        self.grads.keys().map(String::as_str)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &NumArray)> {
        self.grads.iter().map(|(k, v)| (k.as_str(), v))
    }

    /// `self += factor * other`; both must share the key set.
    pub fn add_scaled(&mut self, other: &Grads, factor: f64) -> Result<()> {
        for (k, v) in &other.grads {
            let data: Vec<f64> = v.data().iter().map(|x| x * factor).collect();
            self.accumulate(k, &data)?;
        }
        Ok(())
    }

    pub fn scale(&mut self, factor: f64) {
        for v in self.grads.values_mut() {
            for x in v.data_mut() {
                *x *= factor;
            }
        }
    }

    pub fn flat(&self) -> Vec<f64> {
        self.grads.values().flat_map(|v| v.data().iter().copied()).collect()
    }

    pub fn is_zero(&self) -> bool {
        self.grads.values().all(|v| v.data().iter().all(|&x| x == 0.0))
    }

    pub fn is_finite(&self) -> bool {
        self.grads.values().all(NumArray::is_finite)
    }
}
