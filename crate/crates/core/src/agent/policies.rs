use rand::Rng as _;

use super::dqn::{DqnAgent, UpdateOutcome};
use super::episode::Controller;
use super::replay::Transition;
use crate::rng::{self, Rng};
use crate::trafficsim::NUM_PHASES;
use crate::{Error, Result};

/// Cycles through all phases, `green` seconds each.
#[derive(Clone, Debug)]
pub struct FixedTime {
    pub green: u64,
}

impl Default for FixedTime {
    fn default() -> Self {
        FixedTime { green: 10 }
    }
}

impl Controller for FixedTime {
    fn act(&mut self, _intersection: usize, _state: &[f64], tick: u64) -> Result<usize> {
        Ok(((tick / self.green.max(1)) % NUM_PHASES as u64) as usize)
    }
}

/// Uniformly random phase at every decision.
#[derive(Clone, Debug)]
pub struct RandomPolicy {
    rng: Rng,
}

impl RandomPolicy {
    pub fn new(seed: u64) -> Self {
        RandomPolicy {
            rng: rng::seeded(seed, rng::stream::EXPLORE),
        }
    }
}

impl Controller for RandomPolicy {
    fn act(&mut self, _intersection: usize, _state: &[f64], _tick: u64) -> Result<usize> {
        Ok(self.rng.random_range(0..NUM_PHASES))
    }
}

/// One independent DQN agent per intersection.
#[derive(Clone, Debug)]
pub struct DqnController {
    pub agents: Vec<DqnAgent>,
    /// Store transitions and take gradient steps.
    pub learn: bool,
    /// Overrides the scheduled exploration rate.
    pub eps: Option<f64>,
    pub last_loss: Option<f64>,
}

impl DqnController {
    pub fn new(agents: Vec<DqnAgent>, learn: bool, eps: Option<f64>) -> Self {
        DqnController {
            agents,
            learn,
            eps,
            last_loss: None,
        }
    }

    fn agent(&mut self, i: usize) -> Result<&mut DqnAgent> {
        self.agents
            .get_mut(i)
            .ok_or_else(|| Error::invalid(format!("no agent for intersection {i}")))
    }
}

impl Controller for DqnController {
    fn act(&mut self, intersection: usize, state: &[f64], _tick: u64) -> Result<usize> {
        let eps = self.eps;
        self.agent(intersection)?.act(state, eps)
    }

    fn observe(&mut self, intersection: usize, t: &Transition, tick: u64) -> Result<()> {
        if !self.learn {
            return Ok(());
        }
        let agent = self.agent(intersection)?;
        agent.remember(t.clone());
        if tick.is_multiple_of(agent.cfg.update_every) {
            if let UpdateOutcome::Applied { last_loss, .. } = agent.learn()? {
                self.last_loss = Some(last_loss);
            }
        }
        Ok(())
    }
}
