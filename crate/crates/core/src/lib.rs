//! Traffic-signal-control laboratory.
//!
//! The crate bundles everything needed to study how well learned signal
//! controllers generalize to unseen traffic:
//!
//! * [`diffcore`]: a small reverse-mode differentiation kernel the networks run on.
//! * [`trafficsim`]: a deterministic queue-and-dwell microsimulator with pressure rewards.
//! * [`flow`]: count-matrix flows, exact Wasserstein distance and augmentation.
//! * [`flowgen`]: a WGAN that generates flows at a targeted distance from the training set.
//! * [`agent`]: per-intersection DQN agents.
//! * [`meta`]: clustered meta-training/testing and the plain MAML baseline.
//! * [`harness`]: experiment orchestration, tables and plots.

// Negated comparisons double as NaN rejection in validation code.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod agent;
pub mod diffcore;
pub mod error;
pub mod flow;
pub mod flowgen;
pub mod harness;
pub mod meta;
pub mod rng;
pub mod trafficsim;

pub use error::{Error, Result};

#[cfg(test)]
pub(crate) mod gradcheck;
