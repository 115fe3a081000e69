//! Embedding models and their joint structure/adversarial training.
//!
//! | model  | structure objective       | adversarial phase |
//! |--------|---------------------------|-------------------|
//! | `Idw`  | skip-gram over walk pairs | no                |
//! | `Aidw` | skip-gram over walk pairs | yes               |
//! | `Dae`  | denoising reconstruction  | no                |
//! | `Adae` | denoising reconstruction  | yes               |

mod loss;
mod train;

pub use loss::{
    dae_batch_loss, discriminator_accuracy, discriminator_loss, generator_adversarial_loss,
    idw_batch_loss, AdversarialOutput, DaeOutput, DiscriminatorOutput, IdwOutput, PROB_CLAMP,
};
pub use train::{
    train, train_with_features, Clock, CycleRecord, Networks, NoClock, TrainOutput, TrainingLog,
};

use alloc::string::String;
use alloc::vec::Vec;
use core::fmt;
use core::str::FromStr;

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::nn::NormOrder;
use crate::proximity::PpmiConfig;
use crate::walker::WalkConfig;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ModelKind {
    Idw,
    Aidw,
    Dae,
    Adae,
}

impl ModelKind {
    pub fn is_adversarial(self) -> bool {
        matches!(self, ModelKind::Aidw | ModelKind::Adae)
    }

    pub fn uses_walks(self) -> bool {
        matches!(self, ModelKind::Idw | ModelKind::Aidw)
    }

    pub fn as_str(self) -> &'static str {
        match self {
            ModelKind::Idw => "idw",
            ModelKind::Aidw => "aidw",
            ModelKind::Dae => "dae",
            ModelKind::Adae => "adae",
        }
    }
}

impl fmt::Display for ModelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ModelKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "idw" => Ok(ModelKind::Idw),
            "aidw" => Ok(ModelKind::Aidw),
            "dae" => Ok(ModelKind::Dae),
            "adae" => Ok(ModelKind::Adae),
            other => Err(Error::InvalidArgument(alloc::format!("unknown model `{other}`"))),
        }
    }
}

/// Distribution the adversarial phase matches embeddings to.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Prior {
    Uniform { low: f64, high: f64 },
    Gaussian { mean: f64, std: f64 },
}

impl Default for Prior {
    fn default() -> Self {
        Prior::Uniform { low: -1.0, high: 1.0 }
    }
}

impl Prior {
    pub fn gaussian() -> Self {
        Prior::Gaussian { mean: 0.0, std: 1.0 }
    }

    pub fn sample<R: Rng + ?Sized>(&self, rows: usize, dim: usize, rng: &mut R) -> Matrix {
        match *self {
            Prior::Uniform { low, high } => {
                Matrix::from_fn(rows, dim, |_, _| low + (high - low) * rng.random::<f64>())
            }
            Prior::Gaussian { mean, std } => Matrix::from_fn(rows, dim, |_, _| {
                let z: f64 = StandardNormal.sample(rng);
                mean + std * z
            }),
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            Prior::Uniform { .. } => "uniform",
            Prior::Gaussian { .. } => "gaussian",
        }
    }
}

impl FromStr for Prior {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "uniform" => Ok(Prior::default()),
            "gaussian" | "normal" => Ok(Prior::gaussian()),
            other => Err(Error::InvalidArgument(alloc::format!("unknown prior `{other}`"))),
        }
    }
}

/// Everything that determines a training run.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub model: ModelKind,
    pub dim: usize,
    pub negatives: usize,
    pub walk: WalkConfig,
    pub ppmi: PpmiConfig,
    /// Passes over the positive pairs (walk models) or feature rows (DAE models).
    pub epochs: usize,
    /// Hard cap on training cycles, applied after `epochs`.
    pub max_cycles: Option<usize>,
    /// Pairs (walk models) or rows (DAE models) per structure minibatch.
    pub batch_size: usize,
    /// Prior samples and embeddings per side of an adversarial minibatch.
    pub adversarial_batch: usize,
    pub structure_steps: usize,
    pub disc_steps: usize,
    pub gen_steps: usize,
    pub learning_rate: f64,
    pub disc_learning_rate: f64,
    pub gen_learning_rate: f64,
    pub prior: Prior,
    /// Fraction of input entries zeroed by the denoising criterion.
    pub corruption: f64,
    pub norm_order: NormOrder,
    pub disc_hidden: Vec<usize>,
    /// Global gradient-norm bound in adversarial updates.
    pub clip_norm: f64,
    /// Pairs (or rows) in the fixed probe set used to measure the structure
    /// loss before and after training.
    pub probe_size: usize,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            model: ModelKind::Aidw,
            dim: 128,
            negatives: 5,
            walk: WalkConfig::default(),
            ppmi: PpmiConfig::default(),
            epochs: 5,
            max_cycles: None,
            batch_size: 256,
            adversarial_batch: 128,
            structure_steps: 1,
            disc_steps: 1,
            gen_steps: 1,
            learning_rate: 0.001,
            disc_learning_rate: 0.001,
            gen_learning_rate: 0.001,
            prior: Prior::default(),
            corruption: 0.2,
            norm_order: NormOrder::AfterActivation,
            disc_hidden: alloc::vec![512, 512],
            clip_norm: 5.0,
            probe_size: 4096,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidArgument(m.into()));
        if self.dim < 1 {
            return bad("embedding dimension must be at least 1");
        }
        if self.model.uses_walks() {
            self.walk.validate()?;
            if self.negatives < 1 {
                return bad("need at least one negative sample");
            }
        }
        if self.batch_size < 2 || self.adversarial_batch < 2 {
            return bad("batch-normalized networks need minibatches of at least two rows");
        }
        if !(0.0..1.0).contains(&self.corruption) {
            return bad("corruption fraction must lie in [0, 1)");
        }
        for lr in [self.learning_rate, self.disc_learning_rate, self.gen_learning_rate] {
            if !(lr > 0.0) || !lr.is_finite() {
                return bad("learning rates must be positive");
            }
        }
        if self.ppmi.steps < 1 {
            return bad("transition steps t must be at least 1");
        }
        Ok(())
    }

    /// Adversarial step counts actually used by this model.
    pub fn effective_adversarial_steps(&self) -> (usize, usize) {
        if self.model.is_adversarial() {
            (self.disc_steps, self.gen_steps)
        } else {
            (0, 0)
        }
    }

    /// Stable 64-bit FNV-1a digest of the full configuration.
    pub fn digest(&self) -> u64 {
        use core::fmt::Write;
        let mut s = String::new();
        let _ = write!(s, "{self:?}");
        s.bytes().fold(0xcbf2_9ce4_8422_2325u64, |h, b| {
            (h ^ u64::from(b)).wrapping_mul(0x0100_0000_01b3)
        })
    }
}

/// Learned node representations, one row per node.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingMatrix {
    pub ids: Vec<String>,
    pub values: Matrix,
    pub model: Option<ModelKind>,
    pub seed: Option<u64>,
    pub config_digest: Option<u64>,
}

impl EmbeddingMatrix {
    pub fn new(ids: Vec<String>, values: Matrix) -> Result<Self> {
        if ids.len() != values.rows() {
            return Err(Error::shape(
                format_args!("{} rows", ids.len()),
                format_args!("{} rows", values.rows()),
            ));
        }
        if !values.is_finite() {
            return Err(Error::Invariant("embeddings contain non-finite values".into()));
        }
        Ok(EmbeddingMatrix {
            ids,
            values,
            model: None,
            seed: None,
            config_digest: None,
        })
    }

    pub fn len(&self) -> usize {
        self.values.rows()
    }

    pub fn is_empty(&self) -> bool {
        self.values.rows() == 0
    }

    pub fn dim(&self) -> usize {
        self.values.cols()
    }

    pub fn row(&self, i: usize) -> &[f64] {
        self.values.row(i)
    }
}
