use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::matrix::Matrix;

pub const BN_MOMENTUM: f64 = 0.9;
pub const BN_EPSILON: f64 = 1e-12;

/// Per-feature batch normalization with learned scale (`gamma`) and shift.
#[derive(Debug, Clone, PartialEq)]
pub struct BatchNorm {
    pub gamma: Vec<f64>,
    pub shift: Vec<f64>,
    pub running_mean: Vec<f64>,
    pub running_var: Vec<f64>,
    pub momentum: f64,
    pub epsilon: f64,
}

/// Batch statistics and normalized activations kept for the backward pass.
#[derive(Debug, Clone, PartialEq)]
pub struct BnStats {
    pub mean: Vec<f64>,
    pub var: Vec<f64>,
    pub inv_std: Vec<f64>,
    /// Normalized input before scale and shift.
    pub normalized: Matrix,
}

impl BnStats {
    /// Largest `|mean|` and `|var − 1|` over features of the normalized batch.
    pub fn normalized_moments(&self) -> (f64, f64) {
        let (b, f) = self.normalized.shape();
        let mut worst_mean: f64 = 0.0;
        let mut worst_var: f64 = 0.0;
        for j in 0..f {
            let mean = (0..b).map(|i| self.normalized[(i, j)]).sum::<f64>() / b as f64;
            let var = (0..b)
                .map(|i| {
                    let d = self.normalized[(i, j)] - mean;
                    d * d
                })
                .sum::<f64>()
                / b as f64;
            worst_mean = worst_mean.max(libm::fabs(mean));
            worst_var = worst_var.max(libm::fabs(var - 1.0));
        }
        (worst_mean, worst_var)
    }
}

impl BatchNorm {
    pub fn new(features: usize) -> Self {
        BatchNorm {
            gamma: alloc::vec![1.0; features],
            shift: alloc::vec![0.0; features],
            running_mean: alloc::vec![0.0; features],
            running_var: alloc::vec![1.0; features],
            momentum: BN_MOMENTUM,
            epsilon: BN_EPSILON,
        }
    }

    pub fn features(&self) -> usize {
        self.gamma.len()
    }

    /// Normalizes with the statistics of `x` itself.
    pub fn forward_train(&self, x: &Matrix) -> Result<(Matrix, BnStats)> {
        let (b, f) = x.shape();
        if f != self.features() {
            return Err(Error::shape(self.features(), f));
        }
        if b < 2 {
            return Err(Error::InvalidArgument(
                "batch normalization in train mode needs at least two rows".into(),
            ));
        }
        let mut mean = alloc::vec![0.0; f];
        for i in 0..b {
            for (m, v) in mean.iter_mut().zip(x.row(i)) {
                *m += v;
            }
        }
        mean.iter_mut().for_each(|m| *m /= b as f64);
        let mut var = alloc::vec![0.0; f];
        for i in 0..b {
            for ((s, v), m) in var.iter_mut().zip(x.row(i)).zip(&mean) {
                let d = v - m;
                *s += d * d;
            }
        }
        var.iter_mut().for_each(|s| *s /= b as f64);
        let inv_std: Vec<f64> = var.iter().map(|v| 1.0 / libm::sqrt(v + self.epsilon)).collect();

        let mut normalized = Matrix::zeros(b, f);
        let mut out = Matrix::zeros(b, f);
        for i in 0..b {
            let src = x.row(i);
            let nrow = normalized.row_mut(i);
            for j in 0..f {
                nrow[j] = (src[j] - mean[j]) * inv_std[j];
            }
            let orow = out.row_mut(i);
            for j in 0..f {
                orow[j] = self.gamma[j] * nrow[j] + self.shift[j];
            }
        }
        Ok((
            out,
            BnStats {
                mean,
                var,
                inv_std,
                normalized,
            },
        ))
    }

    /// Normalizes with the running statistics.
    pub fn forward_infer(&self, x: &Matrix) -> Result<Matrix> {
        let (b, f) = x.shape();
        if f != self.features() {
            return Err(Error::shape(self.features(), f));
        }
        let scale: Vec<f64> = self
            .running_var
            .iter()
            .zip(&self.gamma)
            .map(|(v, g)| g / libm::sqrt(v + self.epsilon))
            .collect();
        let mut out = Matrix::zeros(b, f);
        for i in 0..b {
            let src = x.row(i);
            let dst = out.row_mut(i);
            for j in 0..f {
                dst[j] = (src[j] - self.running_mean[j]) * scale[j] + self.shift[j];
            }
        }
        Ok(out)
    }

    /// Exponential moving average of batch mean and unbiased batch variance.
    pub fn update_running(&mut self, stats: &BnStats) {
        let b = stats.normalized.rows() as f64;
        let unbias = b / (b - 1.0);
        let m = self.momentum;
        for j in 0..self.features() {
            self.running_mean[j] = m * self.running_mean[j] + (1.0 - m) * stats.mean[j];
            self.running_var[j] = m * self.running_var[j] + (1.0 - m) * stats.var[j] * unbias;
        }
    }

    /// Full batch-statistics gradient:
    /// `dx = γ·σ⁻¹/B · (B·dy − Σdy − x̂·Σ(dy·x̂))`.
    pub fn backward(
        &self,
        stats: &BnStats,
        grad_out: &Matrix,
        grads: Option<(&mut [f64], &mut [f64])>,
    ) -> Matrix {
        let (b, f) = grad_out.shape();
        let mut sum_dy = alloc::vec![0.0; f];
        let mut sum_dy_xhat = alloc::vec![0.0; f];
        for i in 0..b {
            let g = grad_out.row(i);
            let xh = stats.normalized.row(i);
            for j in 0..f {
                sum_dy[j] += g[j];
                sum_dy_xhat[j] += g[j] * xh[j];
            }
        }
        if let Some((gg, gs)) = grads {
            for j in 0..f {
                gg[j] += sum_dy_xhat[j];
                gs[j] += sum_dy[j];
            }
        }
        let bf = b as f64;
        let mut grad_in = Matrix::zeros(b, f);
        for i in 0..b {
            let g = grad_out.row(i);
            let xh = stats.normalized.row(i);
            let dst = grad_in.row_mut(i);
            for j in 0..f {
                let k = self.gamma[j] * stats.inv_std[j] / bf;
                dst[j] = k * (bf * g[j] - sum_dy[j] - xh[j] * sum_dy_xhat[j]);
            }
        }
        grad_in
    }
}
