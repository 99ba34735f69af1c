use std::collections::BTreeMap;

use super::{Grads, ParamStore};
use crate::{Error, Result};

pub const RMS_DECAY: f64 = 0.9;
pub const RMS_EPSILON: f64 = 1e-8;

#[derive(Clone, Copy, Debug, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Rule {
    /// `θ ← θ − lr·g`
    PlainGradient,
    /// `v ← 0.9·v + 0.1·g²; θ ← θ − lr·g/(√v + 1e-8)`
    AdaptiveRms,
}

/// Update rule plus whatever running state it needs.
#[derive(Clone, Debug)]
pub struct Optimizer {
    rule: Rule,
    lr: f64,
    mean_sq: BTreeMap<String, Vec<f64>>,
}

impl Optimizer {
    pub fn new(rule: Rule, lr: f64) -> Result<Self> {
        if !(lr > 0.0) {
            return Err(Error::invalid(format!("learning rate must be positive, got {lr}")));
        }
        Ok(Optimizer {
            rule,
            lr,
            mean_sq: BTreeMap::new(),
        })
    }

    pub fn plain(lr: f64) -> Result<Self> {
        Self::new(Rule::PlainGradient, lr)
    }

    pub fn rms(lr: f64) -> Result<Self> {
        Self::new(Rule::AdaptiveRms, lr)
    }

    pub fn rule(&self) -> Rule {
        self.rule
    }

    pub fn lr(&self) -> f64 {
        self.lr
    }

    pub fn step(&mut self, params: &mut ParamStore, grads: &Grads) -> Result<()> {
        if grads.keys().ne(params.keys()) {
            return Err(Error::shape("gradient keys differ from parameter keys"));
        }
        for (key, value) in params.iter_mut() {
            let g = grads.get(key)?;
            if g.shape() != value.shape() {
                return Err(Error::shape(format!("gradient for `{key}` has wrong shape")));
            }
            match self.rule {
                Rule::PlainGradient => {
                    for (p, d) in value.data_mut().iter_mut().zip(g.data()) {
                        *p -= self.lr * d;
                    }
                }
                Rule::AdaptiveRms => {
                    let acc = self
                        .mean_sq
                        .entry(key.to_string())
                        .or_insert_with(|| vec![0.0; g.len()]);
                    for ((p, d), v) in value.data_mut().iter_mut().zip(g.data()).zip(acc.iter_mut()) {
                        *v = RMS_DECAY * *v + (1.0 - RMS_DECAY) * d * d;
                        *p -= self.lr * d / (v.sqrt() + RMS_EPSILON);
                    }
                }
            }
        }
        params.bump_step();
        Ok(())
    }
}
