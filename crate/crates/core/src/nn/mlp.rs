use alloc::vec::Vec;

use rand::Rng;

use super::activation::{leaky_relu, leaky_relu_grad, sigmoid, LEAKY_SLOPE};
use super::batchnorm::{BatchNorm, BnStats};
use super::dense::Dense;
use crate::error::{Error, Result};
use crate::matrix::{Matrix, SparseRows};

/// Network input: dense rows or sparse rows of the same logical width.
#[derive(Debug, Clone, Copy)]
pub enum Input<'a> {
    Dense(&'a Matrix),
    Sparse(&'a SparseRows),
}

impl Input<'_> {
    pub fn rows(&self) -> usize {
        match self {
            Input::Dense(m) => m.rows(),
            Input::Sparse(s) => s.rows(),
        }
    }

    pub fn cols(&self) -> usize {
        match self {
            Input::Dense(m) => m.cols(),
            Input::Sparse(s) => s.cols(),
        }
    }

    /// Visits the non-zero entries of a row in increasing column order.
    #[inline]
    pub fn for_each_nonzero(&self, row: usize, mut f: impl FnMut(usize, f64)) {
        match self {
            Input::Dense(m) => {
                for (j, &v) in m.row(row).iter().enumerate() {
                    if v != 0.0 {
                        f(j, v);
                    }
                }
            }
            Input::Sparse(s) => {
                let (idx, val) = s.row(row);
                for (&j, &v) in idx.iter().zip(val) {
                    f(j as usize, v);
                }
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    /// Batch statistics in batch-norm layers.
    Train,
    /// Running statistics in batch-norm layers.
    Infer,
}

/// Where batch normalization sits relative to the activation in a generator.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum NormOrder {
    #[default]
    AfterActivation,
    BeforeActivation,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Layer {
    Dense(Dense),
    LeakyRelu(f64),
    BatchNorm(BatchNorm),
    Sigmoid,
}

impl Layer {
    fn output_width(&self, input: usize) -> Result<usize> {
        match self {
            Layer::Dense(d) if d.inputs() == input => Ok(d.outputs()),
            Layer::Dense(d) => Err(Error::shape(d.inputs(), input)),
            Layer::BatchNorm(bn) if bn.features() == input => Ok(input),
            Layer::BatchNorm(bn) => Err(Error::shape(bn.features(), input)),
            Layer::LeakyRelu(_) | Layer::Sigmoid => Ok(input),
        }
    }
}

/// Activations recorded by one forward pass.
#[derive(Debug, Clone)]
pub struct Tape<'a> {
    input: Input<'a>,
    outputs: Vec<Matrix>,
    bn: Vec<Option<BnStats>>,
    mode: Mode,
}

impl<'a> Tape<'a> {
    pub fn output(&self) -> &Matrix {
        self.outputs.last().expect("networks have at least one layer")
    }

    pub fn into_output(mut self) -> Matrix {
        self.outputs.pop().expect("networks have at least one layer")
    }

    pub fn mode(&self) -> Mode {
        self.mode
    }

    fn layer_input(&self, l: usize) -> Input<'_> {
        if l == 0 {
            self.input
        } else {
            Input::Dense(&self.outputs[l - 1])
        }
    }

    /// Detaches the batch-norm statistics of this pass.
    pub fn into_stats(self) -> BatchStats {
        BatchStats(self.bn)
    }

    pub fn stats(&self) -> BatchStats {
        BatchStats(self.bn.clone())
    }
}

/// Batch-norm statistics of one train-mode pass, one slot per layer.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct BatchStats(Vec<Option<BnStats>>);

impl BatchStats {
    pub fn iter(&self) -> impl Iterator<Item = &BnStats> {
        self.0.iter().flatten()
    }

    /// Worst `|mean|` and `|var − 1|` of normalized activations across layers.
    pub fn moments(&self) -> (f64, f64) {
        self.iter()
            .map(BnStats::normalized_moments)
            .fold((0.0, 0.0), |(a, b), (m, v)| (a.max(m), b.max(v)))
    }
}

/// Parameter gradients, one buffer per parameter tensor.
#[derive(Debug, Clone, PartialEq)]
pub struct Grads(pub Vec<Vec<f64>>);

impl Grads {
    pub fn norm_squared(&self) -> f64 {
        self.0.iter().flatten().map(|g| g * g).sum()
    }

    pub fn scale(&mut self, k: f64) {
        self.0.iter_mut().flatten().for_each(|g| *g *= k);
    }

    pub fn is_finite(&self) -> bool {
        self.0.iter().flatten().all(|g| g.is_finite())
    }

    pub fn is_zero(&self) -> bool {
        self.0.iter().flatten().all(|&g| g == 0.0)
    }
}

/// Rescales all listed gradients together so their joint norm is at most
/// `max_norm`. Returns the norm before clipping.
pub fn clip_global_norm(grads: &mut [&mut Grads], max_norm: f64) -> f64 {
    let norm = libm::sqrt(grads.iter().map(|g| g.norm_squared()).sum::<f64>());
    if norm > max_norm {
        let k = max_norm / norm;
        for g in grads.iter_mut() {
            g.scale(k);
        }
    }
    norm
}

/// A feed-forward stack of layers.
#[derive(Debug, Clone, PartialEq)]
pub struct Mlp {
    layers: Vec<Layer>,
    inputs: usize,
}

impl Mlp {
    pub fn new(inputs: usize, layers: Vec<Layer>) -> Result<Self> {
        if layers.is_empty() {
            return Err(Error::InvalidArgument("a network needs at least one layer".into()));
        }
        let mut width = inputs;
        for layer in &layers {
            width = layer.output_width(width)?;
        }
        Ok(Mlp { layers, inputs })
    }

    /// One dense layer, leaky ReLU (0.2) and batch normalization.
    pub fn generator<R: Rng + ?Sized>(inputs: usize, dim: usize, order: NormOrder, rng: &mut R) -> Self {
        let dense = Layer::Dense(Dense::new(inputs, dim, rng));
        let act = Layer::LeakyRelu(LEAKY_SLOPE);
        let bn = Layer::BatchNorm(BatchNorm::new(dim));
        let layers = match order {
            NormOrder::AfterActivation => alloc::vec![dense, act, bn],
            NormOrder::BeforeActivation => alloc::vec![dense, bn, act],
        };
        Mlp { layers, inputs }
    }

    /// Dense → leaky ReLU → batch norm for each hidden width, then a single
    /// sigmoid output unit.
    pub fn discriminator<R: Rng + ?Sized>(dim: usize, hidden: &[usize], rng: &mut R) -> Self {
        let mut layers = Vec::new();
        let mut width = dim;
        for &h in hidden {
            layers.push(Layer::Dense(Dense::new(width, h, rng)));
            layers.push(Layer::LeakyRelu(LEAKY_SLOPE));
            layers.push(Layer::BatchNorm(BatchNorm::new(h)));
            width = h;
        }
        layers.push(Layer::Dense(Dense::new(width, 1, rng)));
        layers.push(Layer::Sigmoid);
        Mlp { layers, inputs: dim }
    }

    /// A single linear layer.
    pub fn linear<R: Rng + ?Sized>(inputs: usize, outputs: usize, rng: &mut R) -> Self {
        Mlp {
            layers: alloc::vec![Layer::Dense(Dense::new(inputs, outputs, rng))],
            inputs,
        }
    }

    pub fn inputs(&self) -> usize {
        self.inputs
    }

    pub fn outputs(&self) -> usize {
        self.layers
            .iter()
            .fold(self.inputs, |w, l| l.output_width(w).unwrap_or(w))
    }

    pub fn layers(&self) -> &[Layer] {
        &self.layers
    }

    pub fn layers_mut(&mut self) -> &mut [Layer] {
        &mut self.layers
    }

    pub fn forward<'a>(&self, input: Input<'a>, mode: Mode) -> Result<Tape<'a>> {
        if input.cols() != self.inputs {
            return Err(Error::shape(
                format_args!("{} input features", self.inputs),
                input.cols(),
            ));
        }
        if !matches!(self.layers[0], Layer::Dense(_)) && matches!(input, Input::Sparse(_)) {
            return Err(Error::InvalidArgument("sparse input must feed a dense layer".into()));
        }
        let mut outputs: Vec<Matrix> = Vec::with_capacity(self.layers.len());
        let mut bn = Vec::with_capacity(self.layers.len());
        for (l, layer) in self.layers.iter().enumerate() {
            let x = if l == 0 { input } else { Input::Dense(&outputs[l - 1]) };
            let (y, stats) = match layer {
                Layer::Dense(d) => (d.forward(x)?, None),
                Layer::LeakyRelu(slope) => (map(dense_of(x), |v| leaky_relu(v, *slope)), None),
                Layer::Sigmoid => (map(dense_of(x), sigmoid), None),
                Layer::BatchNorm(b) => match mode {
                    Mode::Train => {
                        let (y, s) = b.forward_train(dense_of(x))?;
                        (y, Some(s))
                    }
                    Mode::Infer => (b.forward_infer(dense_of(x))?, None),
                },
            };
            outputs.push(y);
            bn.push(stats);
        }
        Ok(Tape {
            input,
            outputs,
            bn,
            mode,
        })
    }

    /// Output rows for `input` in inference mode.
    pub fn predict(&self, input: Input<'_>) -> Result<Matrix> {
        Ok(self.forward(input, Mode::Infer)?.into_output())
    }

    /// Back-propagates `grad_out` through the recorded pass. Parameter
    /// gradients are added into `grads` when given; the input gradient is
    /// returned when `want_input` is set.
    pub fn backward(
        &self,
        tape: &Tape<'_>,
        grad_out: &Matrix,
        mut grads: Option<&mut Grads>,
        want_input: bool,
    ) -> Result<Option<Matrix>> {
        if grad_out.shape() != tape.output().shape() {
            return Err(Error::shape(
                format_args!("{:?}", tape.output().shape()),
                format_args!("{:?}", grad_out.shape()),
            ));
        }
        if let Some(g) = grads.as_deref() {
            if g.0.len() != self.param_count_tensors() {
                return Err(Error::shape(self.param_count_tensors(), g.0.len()));
            }
        }
        let mut slot = self.param_count_tensors();
        let mut g = grad_out.clone();
        for l in (0..self.layers.len()).rev() {
            let x = tape.layer_input(l);
            let need_input = l > 0 || want_input;
            let y = &tape.outputs[l];
            g = match &self.layers[l] {
                Layer::Dense(d) => {
                    slot -= 2;
                    let pair = grads.as_deref_mut().map(|gr| split_pair(&mut gr.0, slot));
                    match d.backward(x, &g, pair, need_input)? {
                        Some(gi) => gi,
                        None => return Ok(None),
                    }
                }
                Layer::LeakyRelu(slope) => {
                    let xin = dense_of(x);
                    zip_map(&g, xin, |gv, xv| gv * leaky_relu_grad(xv, *slope))
                }
                Layer::Sigmoid => zip_map(&g, y, |gv, s| gv * s * (1.0 - s)),
                Layer::BatchNorm(b) => {
                    slot -= 2;
                    let stats = tape.bn[l].as_ref().ok_or_else(|| {
                        Error::InvalidArgument("cannot back-propagate an inference-mode pass".into())
                    })?;
                    let pair = grads.as_deref_mut().map(|gr| split_pair(&mut gr.0, slot));
                    b.backward(stats, &g, pair)
                }
            };
        }
        Ok(if want_input { Some(g) } else { None })
    }

    /// Folds the batch statistics of a train-mode pass into running averages.
    pub fn update_running_stats(&mut self, stats: &BatchStats) {
        for (layer, stats) in self.layers.iter_mut().zip(&stats.0) {
            if let (Layer::BatchNorm(b), Some(s)) = (layer, stats) {
                b.update_running(s);
            }
        }
    }

    fn param_count_tensors(&self) -> usize {
        self.layers
            .iter()
            .filter(|l| matches!(l, Layer::Dense(_) | Layer::BatchNorm(_)))
            .count()
            * 2
    }

    pub fn param_count(&self) -> usize {
        self.params().iter().map(|p| p.len()).sum()
    }

    /// Trainable tensors: dense weight and bias, batch-norm scale and shift.
    pub fn params(&self) -> Vec<&[f64]> {
        let mut out = Vec::new();
        for layer in &self.layers {
            match layer {
                Layer::Dense(d) => {
                    out.push(d.weight.as_slice());
                    out.push(&d.bias[..]);
                }
                Layer::BatchNorm(b) => {
                    out.push(&b.gamma[..]);
                    out.push(&b.shift[..]);
                }
                _ => {}
            }
        }
        out
    }

    pub fn params_mut(&mut self) -> Vec<&mut [f64]> {
        let mut out = Vec::new();
        for layer in &mut self.layers {
            match layer {
                Layer::Dense(d) => {
                    out.push(d.weight.as_mut_slice());
                    out.push(&mut d.bias[..]);
                }
                Layer::BatchNorm(b) => {
                    out.push(&mut b.gamma[..]);
                    out.push(&mut b.shift[..]);
                }
                _ => {}
            }
        }
        out
    }

    /// Trainable tensors followed by batch-norm running statistics, for
    /// checkpointing.
    pub fn state_mut(&mut self) -> Vec<&mut [f64]> {
        let mut out = Vec::new();
        for layer in &mut self.layers {
            match layer {
                Layer::Dense(d) => {
                    out.push(d.weight.as_mut_slice());
                    out.push(&mut d.bias[..]);
                }
                Layer::BatchNorm(b) => {
                    out.push(&mut b.gamma[..]);
                    out.push(&mut b.shift[..]);
                    out.push(&mut b.running_mean[..]);
                    out.push(&mut b.running_var[..]);
                }
                _ => {}
            }
        }
        out
    }

    pub fn zero_grads(&self) -> Grads {
        Grads(self.params().iter().map(|p| alloc::vec![0.0; p.len()]).collect())
    }

    pub fn is_finite(&self) -> bool {
        self.params().iter().all(|p| p.iter().all(|v| v.is_finite()))
    }

    /// Hash of the sign pattern of every leaky-ReLU input in a pass. Two
    /// passes with equal signatures lie on the same linear piece.
    pub fn kink_signature(&self, tape: &Tape<'_>) -> u64 {
        let mut h: u64 = 0xcbf2_9ce4_8422_2325;
        for (l, layer) in self.layers.iter().enumerate() {
            if let Layer::LeakyRelu(_) = layer {
                let x = dense_of(tape.layer_input(l));
                for &v in x.as_slice() {
                    h ^= u64::from(v > 0.0);
                    h = h.wrapping_mul(0x0100_0000_01b3);
                }
            }
        }
        h
    }
}

fn dense_of(x: Input<'_>) -> &Matrix {
    match x {
        Input::Dense(m) => m,
        Input::Sparse(_) => unreachable!("sparse input only reaches the first dense layer"),
    }
}

fn map(x: &Matrix, f: impl Fn(f64) -> f64) -> Matrix {
    let mut out = x.clone();
    out.as_mut_slice().iter_mut().for_each(|v| *v = f(*v));
    out
}

fn zip_map(a: &Matrix, b: &Matrix, f: impl Fn(f64, f64) -> f64) -> Matrix {
    let mut out = a.clone();
    for (o, &bv) in out.as_mut_slice().iter_mut().zip(b.as_slice()) {
        *o = f(*o, bv);
    }
    out
}

fn split_pair(bufs: &mut [Vec<f64>], at: usize) -> (&mut [f64], &mut [f64]) {
    let (a, b) = bufs[at..at + 2].split_at_mut(1);
    (&mut a[0][..], &mut b[0][..])
}
