use rand::Rng as _;
use serde::{Deserialize, Serialize};

use super::replay::{ReplayMemory, Transition};
use crate::diffcore::{dense, dense_forward, relu, Activation, Grads, NumArray, Optimizer, ParamStore, Tape, Var};
use crate::rng::{self, Rng};
use crate::trafficsim::{Observation, NUM_PHASES};
use crate::{Error, Result};

const LAYERS: [&str; 3] = ["q.h1", "q.h2", "q.out"];

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DqnConfig {
    pub gamma: f64,
    pub lr: f64,
    pub batch_size: usize,
    pub capacity: usize,
    /// Gradient steps between target-network copies.
    pub sync_every: u64,
    pub eps_start: f64,
    pub eps_end: f64,
    /// Decisions over which epsilon decays linearly.
    pub eps_decay: u64,
    /// Sim-seconds between gradient steps.
    pub update_every: u64,
    pub hidden: usize,
    pub seed: u64,
}

impl Default for DqnConfig {
    fn default() -> Self {
        DqnConfig {
            gamma: 0.8,
            lr: 1e-2,
            batch_size: 32,
            capacity: 10_000,
            sync_every: 50,
            eps_start: 0.8,
            eps_end: 0.05,
            eps_decay: 2000,
            update_every: 10,
            hidden: 32,
            seed: 0,
        }
    }
}

impl DqnConfig {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..1.0).contains(&self.gamma) {
            return Err(Error::invalid(format!("gamma must be in [0, 1), got {}", self.gamma)));
        }
        if !(self.lr > 0.0) {
            return Err(Error::invalid(format!("lr must be positive, got {}", self.lr)));
        }
        if self.batch_size == 0 || self.capacity < self.batch_size {
            return Err(Error::invalid("batch size must be in 1..=capacity"));
        }
        for e in [self.eps_start, self.eps_end] {
            if !(0.0..=1.0).contains(&e) {
                return Err(Error::invalid(format!("epsilon {e} outside [0, 1]")));
            }
        }
        if self.hidden == 0 || self.update_every == 0 || self.sync_every == 0 {
            return Err(Error::invalid("hidden width and periods must be positive"));
        }
        Ok(())
    }

    /// Exploration rate after `decisions` decisions.
    pub fn epsilon(&self, decisions: u64) -> f64 {
        if decisions >= self.eps_decay {
            return self.eps_end;
        }
        let frac = decisions as f64 / self.eps_decay as f64;
        self.eps_start + (self.eps_end - self.eps_start) * frac
    }
}

/// `[phase one-hot | incoming / x_max | outgoing / x_max]`.
pub fn encode_state(obs: &Observation) -> Vec<f64> {
    let mut s = obs.phase_one_hot().to_vec();
    let ratio = |(&n, &cap): (&usize, &usize)| n as f64 / cap as f64;
    s.extend(obs.incoming.iter().zip(&obs.incoming_cap).map(ratio));
    s.extend(obs.outgoing.iter().zip(&obs.outgoing_cap).map(ratio));
    s
}

/// Q-values of one state under the given parameters.
pub fn q_forward(params: &ParamStore, s: &[f64]) -> Result<Vec<f64>> {
    let mut x = NumArray::vector(s.to_vec());
    for (i, layer) in LAYERS.iter().enumerate() {
        x = dense_forward(params, layer, &x)?;
        if i + 1 < LAYERS.len() {
            x = x.map(relu);
        }
    }
    Ok(x.into_data())
}

/// Epsilon-greedy choice; greedy ties go to the lowest index.
pub fn select_action(q: &[f64], eps: f64, rng: &mut Rng) -> usize {
    if eps > 0.0 && rng.random::<f64>() < eps {
        return rng.random_range(0..q.len());
    }
    argmax(q)
}

pub(crate) fn argmax(v: &[f64]) -> usize {
    let mut best = 0;
    for (i, &x) in v.iter().enumerate() {
        if x > v[best] {
            best = i;
        }
    }
    best
}

/// Online and target networks.
#[derive(Clone, Debug)]
pub struct QNet {
    pub online: ParamStore,
    pub target: ParamStore,
    input_dim: usize,
}

impl QNet {
    pub fn new(input_dim: usize, hidden: usize, rng: &mut Rng) -> Self {
        let mut online = ParamStore::new();
        online.init_dense(LAYERS[0], input_dim, hidden, rng);
        online.init_dense(LAYERS[1], hidden, hidden, rng);
        online.init_dense(LAYERS[2], hidden, NUM_PHASES, rng);
        QNet {
            target: online.clone(),
            online,
            input_dim,
        }
    }

    /// Wraps existing parameters; the target starts as a copy.
    pub fn from_params(online: ParamStore) -> Result<Self> {
        let w = online.get("q.h1.w")?;
        let input_dim = w.shape()[1];
        if online.get("q.out.w")?.shape()[0] != NUM_PHASES {
            return Err(Error::shape("Q network must have one output per phase"));
        }
        Ok(QNet {
            target: online.clone(),
            online,
            input_dim,
        })
    }

    pub fn input_dim(&self) -> usize {
        self.input_dim
    }

    pub fn q_values(&self, s: &[f64]) -> Result<Vec<f64>> {
        self.check(s)?;
        q_forward(&self.online, s)
    }

    pub fn target_q_values(&self, s: &[f64]) -> Result<Vec<f64>> {
        self.check(s)?;
        q_forward(&self.target, s)
    }

    pub fn sync_target(&mut self) {
        self.target = self.online.clone();
    }

    fn check(&self, s: &[f64]) -> Result<()> {
        if s.len() != self.input_dim {
            return Err(Error::shape(format!(
                "state has {} entries, network expects {}",
                s.len(),
                self.input_dim
            )));
        }
        Ok(())
    }
}

fn targets(target: &ParamStore, batch: &[&Transition], gamma: f64) -> Result<Vec<f64>> {
    batch
        .iter()
        .map(|t| {
            let best = if gamma == 0.0 {
                0.0
            } else {
                q_forward(target, &t.next_state)?
                    .into_iter()
                    .fold(f64::NEG_INFINITY, f64::max)
            };
            Ok(t.reward + gamma * best)
        })
        .collect()
}

fn record_loss(
    tape: &mut Tape,
    online: &ParamStore,
    target: &ParamStore,
    batch: &[&Transition],
    gamma: f64,
) -> Result<Var> {
    if batch.is_empty() {
        return Err(Error::invalid("empty batch"));
    }
    let dim = batch[0].state.len();
    let mut xs = Vec::with_capacity(batch.len() * dim);
    for t in batch {
        if t.state.len() != dim || t.next_state.len() != dim {
            return Err(Error::shape("transitions have inconsistent state sizes"));
        }
        xs.extend_from_slice(&t.state);
    }
    let y = targets(target, batch, gamma)?;
    let actions: Vec<usize> = batch.iter().map(|t| t.action).collect();
    let mut h = tape.constant(NumArray::matrix(batch.len(), dim, xs)?);
    for (i, layer) in LAYERS.iter().enumerate() {
        let act = if i + 1 < LAYERS.len() {
            Activation::Relu
        } else {
            Activation::Identity
        };
        h = dense(tape, online, layer, h, act)?;
    }
    let q = tape.gather(h, &actions)?;
    let y = tape.constant(NumArray::vector(y));
    let err = tape.sub(y, q)?;
    let sq = tape.square(err)?;
    tape.mean(sq)
}

/// Mean squared TD error with targets from `target`.
pub fn dqn_loss(online: &ParamStore, target: &ParamStore, batch: &[&Transition], gamma: f64) -> Result<f64> {
    let mut tape = Tape::new();
    let loss = record_loss(&mut tape, online, target, batch, gamma)?;
    Ok(tape.value(loss)?.item())
}

/// Loss plus its gradient with respect to the online parameters.
pub fn dqn_loss_and_grads(
    online: &ParamStore,
    target: &ParamStore,
    batch: &[&Transition],
    gamma: f64,
) -> Result<(f64, Grads)> {
    let mut tape = Tape::new();
    let loss = record_loss(&mut tape, online, target, batch, gamma)?;
    let value = tape.value(loss)?.item();
    let grads = tape.gradients(loss, online)?;
    Ok((value, grads))
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum UpdateOutcome {
    Applied {
        steps: usize,
        last_loss: f64,
    },
    /// Not enough transitions stored for a batch.
    Skipped,
}

/// `steps` plain-gradient steps on fresh batches drawn from `memory`.
pub fn local_update(
    qnet: &mut QNet,
    memory: &ReplayMemory,
    cfg: &DqnConfig,
    steps: usize,
    rng: &mut Rng,
) -> Result<UpdateOutcome> {
    if memory.len() < cfg.batch_size {
        return Ok(UpdateOutcome::Skipped);
    }
    let mut opt = Optimizer::plain(cfg.lr)?;
    let mut last_loss = 0.0;
    for _ in 0..steps {
        let batch = memory.sample(cfg.batch_size, rng).expect("memory holds a batch");
        let (loss, grads) = dqn_loss_and_grads(&qnet.online, &qnet.target, &batch, cfg.gamma)?;
        if !grads.is_finite() {
            return Err(Error::NonFinite("DQN gradient".into()));
        }
        opt.step(&mut qnet.online, &grads)?;
        last_loss = loss;
    }
    Ok(UpdateOutcome::Applied { steps, last_loss })
}

/// One intersection's learner: network, memory, schedule and counters.
#[derive(Clone, Debug)]
pub struct DqnAgent {
    pub qnet: QNet,
    pub memory: ReplayMemory,
    pub cfg: DqnConfig,
    decisions: u64,
    grad_steps: u64,
    explore_rng: Rng,
    replay_rng: Rng,
}

impl DqnAgent {
    /// Fresh network initialized from the config seed.
    pub fn new(input_dim: usize, cfg: DqnConfig, index: u64) -> Result<Self> {
        cfg.validate()?;
        let mut init = rng::derived(cfg.seed, rng::stream::INIT, index);
        let qnet = QNet::new(input_dim, cfg.hidden, &mut init);
        Ok(Self::with_qnet(qnet, cfg, index))
    }

    /// Starts from given parameters; `index` separates random streams.
    pub fn with_qnet(qnet: QNet, cfg: DqnConfig, index: u64) -> Self {
        DqnAgent {
            memory: ReplayMemory::new(cfg.capacity),
            explore_rng: rng::derived(cfg.seed, rng::stream::EXPLORE, index),
            replay_rng: rng::derived(cfg.seed, rng::stream::REPLAY, index),
            qnet,
            cfg,
            decisions: 0,
            grad_steps: 0,
        }
    }

    pub fn decisions(&self) -> u64 {
        self.decisions
    }

    pub fn grad_steps(&self) -> u64 {
        self.grad_steps
    }

    /// Action under the scheduled epsilon, or `eps` if overridden.
    pub fn act(&mut self, state: &[f64], eps: Option<f64>) -> Result<usize> {
        let e = eps.unwrap_or_else(|| self.cfg.epsilon(self.decisions));
        let q = self.qnet.q_values(state)?;
        self.decisions += 1;
        Ok(select_action(&q, e, &mut self.explore_rng))
    }

    pub fn remember(&mut self, t: Transition) {
        self.memory.push(t);
    }

    /// One gradient step if the memory holds a batch; syncs the target on schedule.
    pub fn learn(&mut self) -> Result<UpdateOutcome> {
        let out = local_update(&mut self.qnet, &self.memory, &self.cfg, 1, &mut self.replay_rng)?;
        if let UpdateOutcome::Applied { .. } = out {
            self.grad_steps += 1;
            if self.grad_steps.is_multiple_of(self.cfg.sync_every) {
                self.qnet.sync_target();
            }
        }
        Ok(out)
    }
}
