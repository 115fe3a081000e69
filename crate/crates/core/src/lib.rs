//! Adversarial network embedding.
//!
//! Node representations are produced by a parameterized generator that reads
//! rows of a shifted PPMI proximity matrix. The generator is trained jointly
//! by a structure preserving objective (inductive DeepWalk or a denoising
//! autoencoder) and an adversarial regularizer that pushes the embedding
//! distribution toward a chosen prior.
//!
//! The crate is `no_std` and only needs `alloc`. File formats, the command
//! line and experiment orchestration live in the `ane` crate.

#![no_std]
#![forbid(unsafe_code)]

extern crate alloc;

#[cfg(test)]
extern crate std;

pub mod embed;
pub mod error;
pub mod eval;
pub mod graph;
pub mod matrix;
pub mod nn;
pub mod proximity;
pub mod seed;
pub mod walker;

pub use error::{Error, Result};
pub use graph::{Graph, TransitionMatrix};
pub use matrix::{Matrix, SparseRows};
pub use proximity::{PpmiConfig, PpmiMatrix};
