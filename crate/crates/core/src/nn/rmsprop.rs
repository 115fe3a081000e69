use alloc::format;
use alloc::vec::Vec;

use super::mlp::Grads;
use crate::error::{Error, Result};

/// RMSProp: `acc ← ρ·acc + (1−ρ)·g²`, `θ ← θ − lr·g/√(acc + ε)`.
#[derive(Debug, Clone, PartialEq)]
pub struct RmsProp {
    pub learning_rate: f64,
    pub rho: f64,
    pub epsilon: f64,
    acc: Vec<Vec<f64>>,
}

impl RmsProp {
    pub const DEFAULT_LR: f64 = 0.001;

    pub fn new(learning_rate: f64) -> Self {
        RmsProp {
            learning_rate,
            rho: 0.9,
            epsilon: 1e-8,
            acc: Vec::new(),
        }
    }

    pub fn accumulators(&self) -> &[Vec<f64>] {
        &self.acc
    }

    /// Applies one update. Non-finite gradients abort before any parameter
    /// changes.
    pub fn step(&mut self, mut params: Vec<&mut [f64]>, grads: &Grads) -> Result<()> {
        if params.len() != grads.0.len() {
            return Err(Error::shape(params.len(), grads.0.len()));
        }
        for (t, (p, g)) in params.iter().zip(&grads.0).enumerate() {
            if p.len() != g.len() {
                return Err(Error::shape(p.len(), g.len()));
            }
            if let Some(i) = g.iter().position(|v| !v.is_finite()) {
                return Err(Error::Invariant(format!(
                    "non-finite gradient {} at tensor {t}, index {i}",
                    g[i]
                )));
            }
        }
        if self.acc.is_empty() {
            self.acc = grads.0.iter().map(|g| alloc::vec![0.0; g.len()]).collect();
        }
        let (rho, lr, eps) = (self.rho, self.learning_rate, self.epsilon);
        for ((p, g), acc) in params.iter_mut().zip(&grads.0).zip(&mut self.acc) {
            for ((theta, &grad), a) in p.iter_mut().zip(g).zip(acc.iter_mut()) {
                *a = rho * *a + (1.0 - rho) * grad * grad;
                *theta -= lr * grad / libm::sqrt(*a + eps);
            }
        }
        Ok(())
    }
}
