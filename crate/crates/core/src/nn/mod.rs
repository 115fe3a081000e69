//! Feed-forward networks with hand-written backward passes.
//!
//! Everything is `f64`. A forward pass borrows the network immutably and
//! returns a [`Tape`] holding the activations the backward pass needs, so
//! the same network can be run on several batches (for instance real and
//! fake discriminator inputs) before any gradient is taken.

mod activation;
mod batchnorm;
mod dense;
pub mod gradcheck;
mod mlp;
mod rmsprop;

pub use activation::{leaky_relu, leaky_relu_grad, log_sigmoid, sigmoid, softplus, LEAKY_SLOPE};
pub use batchnorm::{BatchNorm, BnStats, BN_EPSILON, BN_MOMENTUM};
pub use dense::Dense;
pub use gradcheck::{gradient_check, GradCheckReport};
pub use mlp::{clip_global_norm, BatchStats, Grads, Input, Layer, Mlp, Mode, NormOrder, Tape};
pub use rmsprop::RmsProp;
