//! Random-walk corpora, skip-gram context pairs and negative sampling.

mod alias;

pub use alias::AliasTable;

use alloc::format;
use alloc::vec::Vec;

use rand::seq::SliceRandom;
use rand::Rng;

use crate::error::{Error, Result};
use crate::graph::Graph;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct WalkConfig {
    /// Walks started from every node (η).
    pub walks_per_node: usize,
    /// Nodes per walk (l).
    pub walk_length: usize,
    /// Window size (s): positions closer than `s` form a pair.
    pub context_size: usize,
}

impl Default for WalkConfig {
    fn default() -> Self {
        WalkConfig {
            walks_per_node: 10,
            walk_length: 80,
            context_size: 10,
        }
    }
}

impl WalkConfig {
    pub fn validate(&self) -> Result<()> {
        if self.walks_per_node < 1 {
            return Err(Error::InvalidArgument("walks per node must be at least 1".into()));
        }
        if self.walk_length < 2 {
            return Err(Error::InvalidArgument("walk length must be at least 2".into()));
        }
        if self.context_size < 1 || self.context_size >= self.walk_length {
            return Err(Error::InvalidArgument(format!(
                "context size must lie in [1, {}), got {}",
                self.walk_length, self.context_size
            )));
        }
        Ok(())
    }
}

/// Fixed-length walks stored back to back.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct WalkCorpus {
    walk_length: usize,
    nodes: Vec<u32>,
}

impl WalkCorpus {
    pub fn from_walks(walk_length: usize, walks: &[Vec<u32>]) -> Result<Self> {
        let mut nodes = Vec::with_capacity(walk_length * walks.len());
        for (i, w) in walks.iter().enumerate() {
            if w.len() != walk_length {
                return Err(Error::shape(
                    format_args!("walk of length {walk_length}"),
                    format_args!("walk {i} of length {}", w.len()),
                ));
            }
            nodes.extend_from_slice(w);
        }
        Ok(WalkCorpus { walk_length, nodes })
    }

    pub fn walk_length(&self) -> usize {
        self.walk_length
    }

    pub fn len(&self) -> usize {
        if self.walk_length == 0 {
            0
        } else {
            self.nodes.len() / self.walk_length
        }
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn walks(&self) -> impl Iterator<Item = &[u32]> {
        self.nodes.chunks_exact(self.walk_length.max(1))
    }
}

/// Per-node alias tables over neighbour weights.
#[derive(Debug, Clone)]
pub struct TransitionSampler {
    tables: Vec<AliasTable>,
    neighbors: Vec<Vec<u32>>,
}

impl TransitionSampler {
    pub fn new(graph: &Graph) -> Result<Self> {
        let mut tables = Vec::with_capacity(graph.num_nodes());
        let mut neighbors = Vec::with_capacity(graph.num_nodes());
        for i in 0..graph.num_nodes() {
            let adj = graph.neighbors(i);
            let weights: Vec<f64> = adj.iter().map(|&(_, w)| w).collect();
            let table = AliasTable::new(&weights).map_err(|_| {
                Error::Invariant(format!("node {} has no outgoing weight", graph.id(i)))
            })?;
            tables.push(table);
            neighbors.push(adj.iter().map(|&(j, _)| j as u32).collect());
        }
        Ok(TransitionSampler { tables, neighbors })
    }

    #[inline]
    pub fn step<R: Rng + ?Sized>(&self, from: u32, rng: &mut R) -> u32 {
        let i = from as usize;
        self.neighbors[i][self.tables[i].sample(rng)]
    }
}

/// `η` rounds; each round starts one walk from every node, in shuffled order.
pub fn random_walks<R: Rng + ?Sized>(graph: &Graph, cfg: &WalkConfig, rng: &mut R) -> Result<WalkCorpus> {
    cfg.validate()?;
    let n = graph.num_nodes();
    let sampler = TransitionSampler::new(graph)?;
    let mut nodes = Vec::with_capacity(n * cfg.walks_per_node * cfg.walk_length);
    let mut order: Vec<u32> = (0..n as u32).collect();
    for _ in 0..cfg.walks_per_node {
        order.shuffle(rng);
        for &start in &order {
            let mut cur = start;
            nodes.push(cur);
            for _ in 1..cfg.walk_length {
                cur = sampler.step(cur, rng);
                nodes.push(cur);
            }
        }
    }
    Ok(WalkCorpus {
        walk_length: cfg.walk_length,
        nodes,
    })
}

/// Ordered target-context pairs at window distance `0 < |i − j| < s`.
pub fn positive_pairs(corpus: &WalkCorpus, context_size: usize) -> Vec<(u32, u32)> {
    let l = corpus.walk_length();
    let per_walk = pairs_per_walk(l, context_size);
    let mut out = Vec::with_capacity(per_walk * corpus.len());
    for walk in corpus.walks() {
        for (i, &target) in walk.iter().enumerate() {
            let lo = (i + 1).saturating_sub(context_size);
            let hi = (i + context_size).min(l);
            for (j, &context) in walk.iter().enumerate().take(hi).skip(lo) {
                if j != i {
                    out.push((target, context));
                }
            }
        }
    }
    out
}

/// Number of pairs a single walk of length `l` yields.
pub fn pairs_per_walk(l: usize, context_size: usize) -> usize {
    (0..l)
        .map(|i| {
            let lo = (i + 1).saturating_sub(context_size);
            let hi = (i + context_size).min(l);
            hi - lo - 1
        })
        .sum()
}

/// Noise distribution `P_n(v) ∝ d_v^{3/4}` over weighted degrees.
pub fn negative_sampler(graph: &Graph) -> Result<AliasTable> {
    let weights: Vec<f64> = graph.degrees().iter().map(|&d| libm::pow(d, 0.75)).collect();
    AliasTable::new(&weights)
}

/// A minibatch of positive pairs, each with `k` negatives.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct PairBatch {
    pub targets: Vec<u32>,
    pub contexts: Vec<u32>,
    /// Row-major `len × k`.
    pub negatives: Vec<u32>,
    pub k: usize,
}

impl PairBatch {
    pub fn len(&self) -> usize {
        self.targets.len()
    }

    pub fn is_empty(&self) -> bool {
        self.targets.is_empty()
    }

    pub fn negatives_of(&self, row: usize) -> &[u32] {
        &self.negatives[row * self.k..(row + 1) * self.k]
    }
}

/// Streams minibatches over one epoch of pairs. The pair slice is shuffled
/// in place when the stream is created.
pub struct PairBatches<'a, R: Rng> {
    pairs: &'a [(u32, u32)],
    negatives: &'a AliasTable,
    k: usize,
    batch_size: usize,
    pos: usize,
    rng: &'a mut R,
}

pub fn make_batches<'a, R: Rng>(
    pairs: &'a mut [(u32, u32)],
    negatives: &'a AliasTable,
    k: usize,
    batch_size: usize,
    rng: &'a mut R,
) -> Result<PairBatches<'a, R>> {
    if k < 1 {
        return Err(Error::InvalidArgument("need at least one negative sample".into()));
    }
    if batch_size < 1 {
        return Err(Error::InvalidArgument("batch size must be positive".into()));
    }
    pairs.shuffle(rng);
    Ok(PairBatches {
        pairs,
        negatives,
        k,
        batch_size,
        pos: 0,
        rng,
    })
}

impl<R: Rng> PairBatches<'_, R> {
    pub fn remaining(&self) -> usize {
        (self.pairs.len() - self.pos).div_ceil(self.batch_size)
    }
}

impl<R: Rng> Iterator for PairBatches<'_, R> {
    type Item = PairBatch;

    fn next(&mut self) -> Option<PairBatch> {
        if self.pos >= self.pairs.len() {
            return None;
        }
        let end = (self.pos + self.batch_size).min(self.pairs.len());
        let chunk = &self.pairs[self.pos..end];
        self.pos = end;
        let mut batch = PairBatch {
            targets: Vec::with_capacity(chunk.len()),
            contexts: Vec::with_capacity(chunk.len()),
            negatives: Vec::with_capacity(chunk.len() * self.k),
            k: self.k,
        };
        for &(t, c) in chunk {
            batch.targets.push(t);
            batch.contexts.push(c);
            for _ in 0..self.k {
                batch.negatives.push(self.negatives.sample(self.rng) as u32);
            }
        }
        Some(batch)
    }
}
