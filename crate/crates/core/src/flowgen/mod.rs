//! Wasserstein-GAN flow generator aimed at a fixed critic distance from the
//! training flows, with penalties that keep totals and per-interval jumps
//! realistic.

mod losses;
mod nets;
mod train;

pub use losses::{
    constraint_losses, critic_loss, critic_loss_and_grads, generator_loss, generator_loss_and_grads,
    generator_objective, wasserstein_estimate, GeneratorLoss, RealStats,
};
pub use nets::{critic_forward, CriticNet, FlowLayout, GeneratorNet, MIN_BINS, NOISE_DIM};
pub use train::{sample_flows, train_wgan, TraceRow, WganConfig, WganOutcome};

#[cfg(test)]
mod tests;
