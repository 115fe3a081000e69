use alloc::vec::Vec;

use rand::seq::SliceRandom;
use rand::Rng;
use rand_chacha::ChaCha8Rng;

use super::loss::{dae_batch_loss, discriminator_loss, generator_adversarial_loss, idw_batch_loss};
use super::{EmbeddingMatrix, TrainConfig};
use crate::error::{Error, Result};
use crate::graph::Graph;
use crate::matrix::SparseRows;
use crate::nn::{clip_global_norm, BatchStats, Grads, Input, Mlp, Mode, RmsProp};
use crate::proximity::ppmi_features;
use crate::seed::{rng, Stream};
use crate::walker::{make_batches, negative_sampler, positive_pairs, random_walks, PairBatch};

/// Millisecond source for the `wall_ms` log column.
pub trait Clock {
    fn elapsed_ms(&self) -> u64;
}

/// Reports zero elapsed time, keeping logs reproducible.
#[derive(Debug, Clone, Copy, Default)]
pub struct NoClock;

impl Clock for NoClock {
    fn elapsed_ms(&self) -> u64 {
        0
    }
}

/// One training cycle: structure steps, then discriminator steps, then
/// generator steps. Losses are means over the steps actually taken.
#[derive(Debug, Clone, PartialEq)]
pub struct CycleRecord {
    pub cycle: usize,
    pub structure_loss: Option<f64>,
    pub disc_loss: Option<f64>,
    pub gen_loss: Option<f64>,
    /// Discriminator accuracy on each step's fresh batch, before its update.
    pub disc_accuracy: Option<f64>,
    /// Largest `|mean|` and `|var − 1|` of normalized batch-norm activations
    /// seen in this cycle.
    pub bn_mean_dev: f64,
    pub bn_var_dev: f64,
    pub wall_ms: u64,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct TrainingLog {
    pub records: Vec<CycleRecord>,
    /// Structure loss on the fixed probe set at initialization.
    pub initial_probe_loss: f64,
    /// Structure loss on the same probe set after the last cycle.
    pub final_probe_loss: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Networks {
    /// `G`, shared by the structure and adversarial phases.
    pub generator: Mlp,
    /// `F` for walk models.
    pub context: Option<Mlp>,
    /// Reconstruction head for DAE models.
    pub decoder: Option<Mlp>,
    pub discriminator: Option<Mlp>,
}

#[derive(Debug, Clone)]
pub struct TrainOutput {
    pub embeddings: EmbeddingMatrix,
    pub log: TrainingLog,
    pub networks: Networks,
}

/// Builds PPMI features for `graph` and trains the configured model.
pub fn train(graph: &Graph, cfg: &TrainConfig) -> Result<TrainOutput> {
    let features = ppmi_features(graph, &cfg.ppmi)?;
    train_with_features(graph, &features.to_sparse(), cfg, &NoClock, &mut |_| {})
}

/// Trains on precomputed feature rows (one per graph node). `observer` sees
/// every cycle record as soon as it is complete.
pub fn train_with_features(
    graph: &Graph,
    features: &SparseRows,
    cfg: &TrainConfig,
    clock: &dyn Clock,
    observer: &mut dyn FnMut(&CycleRecord),
) -> Result<TrainOutput> {
    cfg.validate()?;
    let n = graph.num_nodes();
    if n == 0 {
        return Err(Error::EmptyGraph);
    }
    if features.rows() != n {
        return Err(Error::shape(
            format_args!("{n} feature rows"),
            format_args!("{}", features.rows()),
        ));
    }
    let mut t = Trainer::new(graph, features, cfg)?;
    let log = t.run(clock, observer)?;
    let values = t.nets.generator.predict(Input::Sparse(features))?;
    let mut embeddings = EmbeddingMatrix::new(graph.ids().to_vec(), values)?;
    embeddings.model = Some(cfg.model);
    embeddings.seed = Some(cfg.seed);
    embeddings.config_digest = Some(cfg.digest());
    Ok(TrainOutput {
        embeddings,
        log,
        networks: t.nets,
    })
}

/// Structure-phase training data.
enum Corpus {
    Pairs {
        pairs: Vec<(u32, u32)>,
        negatives: crate::walker::AliasTable,
        probe: PairBatch,
    },
    Rows {
        order: Vec<u32>,
        probe: SparseRows,
    },
}

struct Optimizers {
    generator: RmsProp,
    context: RmsProp,
    decoder: RmsProp,
    discriminator: RmsProp,
    adversarial: RmsProp,
}

struct Trainer<'a> {
    cfg: &'a TrainConfig,
    features: &'a SparseRows,
    nets: Networks,
    opt: Optimizers,
    corpus: Corpus,
    batch_rng: ChaCha8Rng,
    corruption_rng: ChaCha8Rng,
    prior_rng: ChaCha8Rng,
    rows_rng: ChaCha8Rng,
}

#[derive(Default)]
struct Mean {
    sum: f64,
    count: usize,
}

impl Mean {
    fn push(&mut self, v: f64) {
        self.sum += v;
        self.count += 1;
    }

    fn get(&self) -> Option<f64> {
        (self.count > 0).then(|| self.sum / self.count as f64)
    }
}

#[derive(Default)]
struct Moments {
    mean: f64,
    var: f64,
}

impl Moments {
    fn absorb(&mut self, stats: &BatchStats) {
        let (m, v) = stats.moments();
        self.mean = self.mean.max(m);
        self.var = self.var.max(v);
    }
}

impl<'a> Trainer<'a> {
    fn new(graph: &Graph, features: &'a SparseRows, cfg: &'a TrainConfig) -> Result<Self> {
        let inputs = features.cols();
        let generator = Mlp::generator(inputs, cfg.dim, cfg.norm_order, &mut rng(cfg.seed, Stream::InitTarget));
        let (context, decoder) = if cfg.model.uses_walks() {
            let f = Mlp::generator(inputs, cfg.dim, cfg.norm_order, &mut rng(cfg.seed, Stream::InitContext));
            (Some(f), None)
        } else {
            let d = Mlp::linear(cfg.dim, inputs, &mut rng(cfg.seed, Stream::InitDecoder));
            (None, Some(d))
        };
        let discriminator = cfg.model.is_adversarial().then(|| {
            Mlp::discriminator(
                cfg.dim,
                &cfg.disc_hidden,
                &mut rng(cfg.seed, Stream::InitDiscriminator),
            )
        });

        let mut probe_rng = rng(cfg.seed, Stream::Probe);
        let probe_size = cfg.probe_size.max(2);
        let corpus = if cfg.model.uses_walks() {
            let walks = random_walks(graph, &cfg.walk, &mut rng(cfg.seed, Stream::Walks))?;
            let pairs = positive_pairs(&walks, cfg.walk.context_size);
            if pairs.len() < 2 {
                return Err(Error::InvalidArgument("walk corpus yields no training pairs".into()));
            }
            let negatives = negative_sampler(graph)?;
            let mut probe = PairBatch {
                k: cfg.negatives,
                ..PairBatch::default()
            };
            for _ in 0..probe_size {
                let (t, c) = pairs[probe_rng.random_range(0..pairs.len())];
                probe.targets.push(t);
                probe.contexts.push(c);
                for _ in 0..cfg.negatives {
                    probe.negatives.push(negatives.sample(&mut probe_rng) as u32);
                }
            }
            Corpus::Pairs {
                pairs,
                negatives,
                probe,
            }
        } else {
            if features.rows() < 2 {
                return Err(Error::InvalidArgument("need at least two feature rows".into()));
            }
            let rows: Vec<u32> = (0..probe_size)
                .map(|_| probe_rng.random_range(0..features.rows() as u32))
                .collect();
            Corpus::Rows {
                order: (0..features.rows() as u32).collect(),
                probe: features.gather(rows.iter().map(|&r| r as usize)),
            }
        };

        Ok(Trainer {
            cfg,
            features,
            nets: Networks {
                generator,
                context,
                decoder,
                discriminator,
            },
            opt: Optimizers {
                generator: RmsProp::new(cfg.learning_rate),
                context: RmsProp::new(cfg.learning_rate),
                decoder: RmsProp::new(cfg.learning_rate),
                discriminator: RmsProp::new(cfg.disc_learning_rate),
                adversarial: RmsProp::new(cfg.gen_learning_rate),
            },
            corpus,
            batch_rng: rng(cfg.seed, Stream::Pairs),
            corruption_rng: rng(cfg.seed, Stream::Corruption),
            prior_rng: rng(cfg.seed, Stream::Prior),
            rows_rng: rng(cfg.seed, Stream::AdversarialRows),
        })
    }

    /// Structure loss on the probe set. Corruption for DAE probes uses a
    /// fixed stream so the value depends on the parameters only.
    fn probe_loss(&self) -> Result<f64> {
        match &self.corpus {
            Corpus::Pairs { probe, .. } => {
                let context = self.nets.context.as_ref().expect("walk models have F");
                Ok(idw_batch_loss(&self.nets.generator, context, probe, self.features)?.loss)
            }
            Corpus::Rows { probe, .. } => {
                let decoder = self.nets.decoder.as_ref().expect("DAE models have a decoder");
                let mut r = rng(self.cfg.seed ^ 0x5eed, Stream::Probe);
                Ok(dae_batch_loss(&self.nets.generator, decoder, probe, self.cfg.corruption, &mut r)?.loss)
            }
        }
    }

    fn batches_per_epoch(&self) -> usize {
        let (items, b) = match &self.corpus {
            Corpus::Pairs { pairs, .. } => (pairs.len(), self.cfg.batch_size),
            Corpus::Rows { order, .. } => (order.len(), self.cfg.batch_size),
        };
        let full = items / b;
        full + usize::from(items % b >= 2)
    }

    fn run(&mut self, clock: &dyn Clock, observer: &mut dyn FnMut(&CycleRecord)) -> Result<TrainingLog> {
        let cfg = self.cfg;
        let mut log = TrainingLog {
            initial_probe_loss: self.probe_loss()?,
            ..TrainingLog::default()
        };
        let per_epoch = self.batches_per_epoch().div_ceil(cfg.structure_steps.max(1));
        let mut total = per_epoch.saturating_mul(cfg.epochs);
        if let Some(cap) = cfg.max_cycles {
            total = total.min(cap);
        }
        let (disc_steps, gen_steps) = cfg.effective_adversarial_steps();

        let mut cycle = 0;
        let mut epoch_batches: Vec<Batch> = Vec::new();
        while cycle < total {
            if cycle % per_epoch == 0 {
                epoch_batches = self.epoch_batches()?;
                epoch_batches.reverse();
            }
            let mut moments = Moments::default();
            let mut structure = Mean::default();
            for _ in 0..cfg.structure_steps {
                let Some(batch) = epoch_batches.pop() else { break };
                let loss = self.structure_step(&batch, &mut moments).map_err(|e| diverged(cycle, e))?;
                structure.push(loss);
            }
            let mut disc = Mean::default();
            let mut accuracy = Mean::default();
            for _ in 0..disc_steps {
                let (loss, acc) = self.discriminator_step(&mut moments).map_err(|e| diverged(cycle, e))?;
                disc.push(loss);
                accuracy.push(acc);
            }
            let mut gen = Mean::default();
            for _ in 0..gen_steps {
                gen.push(self.generator_step(&mut moments).map_err(|e| diverged(cycle, e))?);
            }
            let record = CycleRecord {
                cycle,
                structure_loss: structure.get(),
                disc_loss: disc.get(),
                gen_loss: gen.get(),
                disc_accuracy: accuracy.get(),
                bn_mean_dev: moments.mean,
                bn_var_dev: moments.var,
                wall_ms: clock.elapsed_ms(),
            };
            for v in [record.structure_loss, record.disc_loss, record.gen_loss].into_iter().flatten() {
                if !v.is_finite() {
                    observer(&record);
                    log.records.push(record);
                    return Err(Error::Divergence {
                        cycle,
                        message: "non-finite loss".into(),
                    });
                }
            }
            observer(&record);
            log.records.push(record);
            cycle += 1;
        }
        log.final_probe_loss = self.probe_loss()?;
        Ok(log)
    }

    /// Shuffles the structure corpus and cuts it into minibatches, dropping
    /// a trailing batch too small for batch normalization.
    fn epoch_batches(&mut self) -> Result<Vec<Batch>> {
        let cfg = self.cfg;
        let mut out = Vec::new();
        match &mut self.corpus {
            Corpus::Pairs { pairs, negatives, .. } => {
                for b in make_batches(pairs, negatives, cfg.negatives, cfg.batch_size, &mut self.batch_rng)? {
                    if b.len() >= 2 {
                        out.push(Batch::Pairs(b));
                    }
                }
            }
            Corpus::Rows { order, .. } => {
                order.shuffle(&mut self.batch_rng);
                for chunk in order.chunks(cfg.batch_size) {
                    if chunk.len() >= 2 {
                        out.push(Batch::Rows(chunk.to_vec()));
                    }
                }
            }
        }
        Ok(out)
    }

    fn structure_step(&mut self, batch: &Batch, moments: &mut Moments) -> Result<f64> {
        let nets = &mut self.nets;
        match batch {
            Batch::Pairs(b) => {
                let context = nets.context.as_mut().expect("walk models have F");
                let out = idw_batch_loss(&nets.generator, context, b, self.features)?;
                moments.absorb(&out.target_stats);
                moments.absorb(&out.context_stats);
                self.opt.generator.step(nets.generator.params_mut(), &out.target_grads)?;
                self.opt.context.step(context.params_mut(), &out.context_grads)?;
                nets.generator.update_running_stats(&out.target_stats);
                context.update_running_stats(&out.context_stats);
                Ok(out.loss)
            }
            Batch::Rows(rows) => {
                let decoder = nets.decoder.as_mut().expect("DAE models have a decoder");
                let x = self.features.gather(rows.iter().map(|&r| r as usize));
                let out = dae_batch_loss(&nets.generator, decoder, &x, self.cfg.corruption, &mut self.corruption_rng)?;
                moments.absorb(&out.encoder_stats);
                self.opt.generator.step(nets.generator.params_mut(), &out.encoder_grads)?;
                self.opt.decoder.step(decoder.params_mut(), &out.decoder_grads)?;
                nets.generator.update_running_stats(&out.encoder_stats);
                Ok(out.loss)
            }
        }
    }

    fn adversarial_rows(&mut self) -> SparseRows {
        let n = self.features.rows();
        let b = self.cfg.adversarial_batch.min(n);
        let idx = rand::seq::index::sample(&mut self.rows_rng, n, b);
        self.features.gather(idx.iter())
    }

    /// One discriminator update on fresh prior samples and detached
    /// embeddings. Returns the loss and the pre-update accuracy.
    fn discriminator_step(&mut self, moments: &mut Moments) -> Result<(f64, f64)> {
        let rows = self.adversarial_rows();
        let fake = self.nets.generator.forward(Input::Sparse(&rows), Mode::Train)?.into_output();
        let real = self.cfg.prior.sample(fake.rows(), self.cfg.dim, &mut self.prior_rng);
        let disc = self.nets.discriminator.as_mut().expect("adversarial models have D");
        let mut out = discriminator_loss(disc, &real, &fake)?;
        moments.absorb(&out.real_stats);
        moments.absorb(&out.fake_stats);
        clip(&mut out.grads, self.cfg.clip_norm);
        self.opt.discriminator.step(disc.params_mut(), &out.grads)?;
        disc.update_running_stats(&out.real_stats);
        disc.update_running_stats(&out.fake_stats);
        Ok((out.loss, out.accuracy))
    }

    /// One generator update against the frozen discriminator.
    fn generator_step(&mut self, moments: &mut Moments) -> Result<f64> {
        let rows = self.adversarial_rows();
        let disc = self.nets.discriminator.as_ref().expect("adversarial models have D");
        let mut out = generator_adversarial_loss(&self.nets.generator, disc, &rows)?;
        moments.absorb(&out.generator_stats);
        clip(&mut out.grads, self.cfg.clip_norm);
        self.opt.adversarial.step(self.nets.generator.params_mut(), &out.grads)?;
        self.nets.generator.update_running_stats(&out.generator_stats);
        Ok(out.loss)
    }
}

enum Batch {
    Pairs(PairBatch),
    Rows(Vec<u32>),
}

fn clip(grads: &mut Grads, max_norm: f64) {
    if max_norm.is_finite() && max_norm > 0.0 {
        clip_global_norm(&mut [grads], max_norm);
    }
}

fn diverged(cycle: usize, e: Error) -> Error {
    match e {
        Error::Invariant(message) => Error::Divergence { cycle, message },
        other => other,
    }
}
