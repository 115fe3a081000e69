use alloc::vec::Vec;

use rand::Rng;

use super::mlp::Input;
use crate::error::{Error, Result};
use crate::matrix::{axpy, dot, Matrix};

/// Fully connected layer `y = x·W + b`.
///
/// `weight` is stored input-major (`in × out`) so that both dense and
/// sparse inputs accumulate contiguous weight rows in the same order.
#[derive(Debug, Clone, PartialEq)]
pub struct Dense {
    pub weight: Matrix,
    pub bias: Vec<f64>,
}

impl Dense {
    /// Glorot-uniform weights, zero bias.
    pub fn new<R: Rng + ?Sized>(inputs: usize, outputs: usize, rng: &mut R) -> Self {
        let limit = libm::sqrt(6.0 / (inputs + outputs) as f64);
        let weight = Matrix::from_fn(inputs, outputs, |_, _| limit * (2.0 * rng.random::<f64>() - 1.0));
        Dense {
            weight,
            bias: alloc::vec![0.0; outputs],
        }
    }

    pub fn from_parts(weight: Matrix, bias: Vec<f64>) -> Result<Self> {
        if bias.len() != weight.cols() {
            return Err(Error::shape(weight.cols(), bias.len()));
        }
        Ok(Dense { weight, bias })
    }

    pub fn inputs(&self) -> usize {
        self.weight.rows()
    }

    pub fn outputs(&self) -> usize {
        self.weight.cols()
    }

    pub fn forward(&self, input: Input<'_>) -> Result<Matrix> {
        if input.cols() != self.inputs() {
            return Err(Error::shape(
                format_args!("{} input features", self.inputs()),
                input.cols(),
            ));
        }
        let mut out = Matrix::zeros(input.rows(), self.outputs());
        for b in 0..input.rows() {
            let dst = out.row_mut(b);
            input.for_each_nonzero(b, |i, v| axpy(v, self.weight.row(i), dst));
            for (d, &bias) in dst.iter_mut().zip(&self.bias) {
                *d += bias;
            }
        }
        Ok(out)
    }

    /// Accumulates `∂L/∂W` and `∂L/∂b` and optionally returns `∂L/∂x`.
    pub fn backward(
        &self,
        input: Input<'_>,
        grad_out: &Matrix,
        grads: Option<(&mut [f64], &mut [f64])>,
        want_input: bool,
    ) -> Result<Option<Matrix>> {
        if grad_out.shape() != (input.rows(), self.outputs()) {
            return Err(Error::shape(
                format_args!("{:?}", (input.rows(), self.outputs())),
                format_args!("{:?}", grad_out.shape()),
            ));
        }
        if let Some((gw, gb)) = grads {
            let out = self.outputs();
            for b in 0..input.rows() {
                let g = grad_out.row(b);
                input.for_each_nonzero(b, |i, v| axpy(v, g, &mut gw[i * out..(i + 1) * out]));
                axpy(1.0, g, gb);
            }
        }
        if !want_input {
            return Ok(None);
        }
        let mut grad_in = Matrix::zeros(input.rows(), self.inputs());
        for b in 0..input.rows() {
            let g = grad_out.row(b);
            for (i, dst) in grad_in.row_mut(b).iter_mut().enumerate() {
                *dst = dot(self.weight.row(i), g);
            }
        }
        Ok(Some(grad_in))
    }
}
