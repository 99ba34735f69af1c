use rand::seq::index;
use serde::{Deserialize, Serialize};

use super::losses::{critic_loss_and_grads, generator_loss_and_grads, RealStats};
use super::nets::{CriticNet, FlowLayout, GeneratorNet};
use crate::diffcore::{NumArray, Optimizer};
use crate::flow::{FlowSet, Provenance};
use crate::rng::{self, Rng};
use crate::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct WganConfig {
    /// Target critic distance between generated and real flows.
    pub epsilon: f64,
    pub k1: f64,
    pub k2: f64,
    /// Critic weights are clipped to `[-clip, clip]`.
    pub clip: f64,
    pub n_critic: usize,
    /// Generator steps at the start that use `warmup_critic` critic steps.
    pub warmup_steps: usize,
    pub warmup_critic: usize,
    pub lr: f64,
    /// Generator steps.
    pub iterations: usize,
    pub batch_size: usize,
    pub hidden: usize,
    /// Vehicles per interval mapped to 1.0.
    pub cap: f64,
    pub seed: u64,
}

impl Default for WganConfig {
    fn default() -> Self {
        WganConfig {
            epsilon: 0.0,
            k1: 1.0,
            k2: 1.0,
            clip: 0.5,
            n_critic: 5,
            warmup_steps: 25,
            warmup_critic: 100,
            lr: 5e-4,
            iterations: 1000,
            batch_size: 8,
            hidden: 64,
            cap: 30.0,
            seed: 0,
        }
    }
}

impl WganConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.epsilon >= 0.0) || !(self.k1 >= 0.0) || !(self.k2 >= 0.0) {
            return Err(Error::invalid("epsilon, k1 and k2 must be non-negative"));
        }
        if !(self.clip > 0.0) || !(self.lr > 0.0) || !(self.cap > 0.0) {
            return Err(Error::invalid("clip, lr and cap must be positive"));
        }
        if self.batch_size == 0 || self.hidden == 0 {
            return Err(Error::invalid("batch size and hidden width must be positive"));
        }
        Ok(())
    }
}

/// One generator step of the training loop.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TraceRow {
    pub step: usize,
    pub l_d: f64,
    pub w_hat: f64,
    pub l_sum: f64,
    pub l_delta: f64,
}

#[derive(Clone, Debug)]
pub struct WganOutcome {
    pub generator: GeneratorNet,
    pub critic: CriticNet,
    pub trace: Vec<TraceRow>,
}

impl WganOutcome {
    /// Trace as CSV with columns step, l_d, w_hat, l_sum, l_delta.
    pub fn trace_csv(&self) -> Result<String> {
        trace_csv(&self.trace)
    }
}

fn trace_csv(rows: &[TraceRow]) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    if rows.is_empty() {
        w.write_record(["step", "l_d", "w_hat", "l_sum", "l_delta"])
            .map_err(|e| Error::invalid(e.to_string()))?;
    }
    for r in rows {
        w.serialize(r).map_err(|e| Error::invalid(e.to_string()))?;
    }
    let bytes = w.into_inner().map_err(|e| Error::invalid(e.to_string()))?;
    Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
}

fn real_batch(real: &[NumArray], n: usize, rng: &mut Rng) -> Vec<NumArray> {
    index::sample(rng, real.len(), n)
        .iter()
        .map(|i| real[i].clone())
        .collect()
}

/// Alternates `n_critic` clipped critic steps with one generator step.
pub fn train_wgan(real: &FlowSet, cfg: &WganConfig) -> Result<WganOutcome> {
    cfg.validate()?;
    if real.len() < cfg.batch_size {
        return Err(Error::invalid(format!(
            "need at least {} real flows, got {}",
            cfg.batch_size,
            real.len()
        )));
    }
    let layout = FlowLayout::of(&real.members()[0], cfg.cap);
    let stats = RealStats::from_flows(real.members())?;
    let scaled: Vec<NumArray> = real.members().iter().map(|f| layout.scale(f)).collect::<Result<_>>()?;

    let mut init = rng::seeded(cfg.seed, rng::stream::INIT);
    let mut generator = GeneratorNet::new(layout.clone(), cfg.hidden, &mut init)?;
    let mut critic = CriticNet::new(layout.routes.len(), layout.bins, &mut init)?;
    critic.params.clip(cfg.clip);
    let mut noise = rng::seeded(cfg.seed, rng::stream::NOISE);
    let mut batches = rng::seeded(cfg.seed, rng::stream::BATCH);
    let mut critic_opt = Optimizer::rms(cfg.lr)?;
    let mut gen_opt = Optimizer::rms(cfg.lr)?;
    let mut trace = Vec::with_capacity(cfg.iterations);

    for step in 0..cfg.iterations {
        let mut l_d = 0.0;
        let critic_steps = if step < cfg.warmup_steps {
            cfg.warmup_critic
        } else {
            cfg.n_critic
        };
        for _ in 0..critic_steps {
            let r = real_batch(&scaled, cfg.batch_size, &mut batches);
            let z = GeneratorNet::noise(cfg.batch_size, &mut noise);
            let fake = generator.generate(&z)?;
            let (loss, grads) = critic_loss_and_grads(&critic, &r, &fake)?;
            if !loss.is_finite() || !grads.is_finite() {
                return Err(diverged("critic", step, loss, &trace));
            }
            critic_opt.step(&mut critic.params, &grads)?;
            critic.params.clip(cfg.clip);
            l_d = loss;
        }
        let r = real_batch(&scaled, cfg.batch_size, &mut batches);
        let z = GeneratorNet::noise(cfg.batch_size, &mut noise);
        let (parts, grads) = generator_loss_and_grads(&critic, &generator, &z, &r, &stats, cfg)?;
        if !parts.total.is_finite() || !grads.is_finite() {
            return Err(diverged("generator", step, parts.total, &trace));
        }
        gen_opt.step(&mut generator.params, &grads)?;
        trace.push(TraceRow {
            step,
            l_d,
            w_hat: parts.w_hat,
            l_sum: parts.l_sum,
            l_delta: parts.l_delta,
        });
    }
    Ok(WganOutcome {
        generator,
        critic,
        trace,
    })
}

fn diverged(which: &str, step: usize, loss: f64, trace: &[TraceRow]) -> Error {
    let tail = &trace[trace.len().saturating_sub(5)..];
    let tail = trace_csv(tail).unwrap_or_default();
    Error::NonFinite(format!("{which} loss {loss} at step {step}; recent trace:\n{tail}"))
}

/// `n` generated flows tagged with the generator's target distance.
pub fn sample_flows(generator: &GeneratorNet, n: usize, seed: u64, epsilon: f64) -> Result<FlowSet> {
    let mut rng = rng::seeded(seed, rng::stream::NOISE);
    let members = if n == 0 {
        Vec::new()
    } else {
        let z = GeneratorNet::noise(n, &mut rng);
        generator
            .generate(&z)?
            .iter()
            .map(|v| generator.layout().to_flow(v))
            .collect::<Result<_>>()?
    };
    FlowSet::new(members, Provenance::Generated { epsilon })
}
