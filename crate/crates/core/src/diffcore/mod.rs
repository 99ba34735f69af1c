//! Minimal differentiable-computation kernel.
//!
//! Networks are described as plain functions that record operations on a
//! [`Tape`]; [`Tape::gradients`] walks the recording backwards and returns a
//! [`Grads`] keyed exactly like the [`ParamStore`] the parameters came from.
//! Everything is 64-bit and at most rank 2.

mod array;
mod layers;
mod optim;
mod params;
mod tape;

pub use array::NumArray;
pub(crate) use layers::{conv, dense, dense_frozen};
pub use layers::{conv1d_forward, dense_forward, relu, sigmoid, Activation, CONV_WIDTH};
pub use optim::{Optimizer, Rule, RMS_DECAY, RMS_EPSILON};
pub use params::{Grads, ParamStore, PARAMS_HEADER};
pub use tape::{Tape, Var};
