//! DQN signal agents and the episode loop that drives any controller.

mod dqn;
mod episode;
mod policies;
mod replay;

pub(crate) use dqn::argmax;
pub use dqn::{
    dqn_loss, dqn_loss_and_grads, encode_state, local_update, q_forward, select_action, DqnAgent, DqnConfig, QNet,
    UpdateOutcome,
};
pub use episode::{run_episode, Controller, DecisionRecord, EpisodeConfig, EpisodeOutcome, DECISION_INTERVAL};
pub use policies::{DqnController, FixedTime, RandomPolicy};
pub use replay::{ReplayMemory, Transition};
