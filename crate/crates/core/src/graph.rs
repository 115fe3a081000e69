//! Undirected weighted information networks.

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::matrix::Matrix;

/// An undirected weighted graph with dense node indices `0..N`.
///
/// Adjacency lists are sorted by neighbour index and symmetric: `(j, w)`
/// appears in the list of `i` iff `(i, w)` appears in the list of `j`.
#[derive(Debug, Clone, PartialEq)]
pub struct Graph {
    ids: Vec<String>,
    adjacency: Vec<Vec<(usize, f64)>>,
}

impl Graph {
    /// Builds a graph from directed edge records.
    ///
    /// Repeated `(i, j)` records are summed, then each undirected edge gets
    /// `max(w_ij, w_ji)`. Zero-weight records register their endpoints but
    /// create no adjacency. Node ids are indexed by first appearance.
    pub fn from_edges<'a, I>(edges: I, weighted: bool) -> Result<Graph>
    where
        I: IntoIterator<Item = (&'a str, &'a str, f64)>,
    {
        let mut index: BTreeMap<String, usize> = BTreeMap::new();
        let mut ids = Vec::new();
        let mut directed: BTreeMap<(usize, usize), f64> = BTreeMap::new();
        let mut intern = |id: &str| -> usize {
            if let Some(&i) = index.get(id) {
                return i;
            }
            let i = ids.len();
            ids.push(id.to_string());
            index.insert(id.to_string(), i);
            i
        };
        for (src, dst, w) in edges {
            if !w.is_finite() || w < 0.0 {
                return Err(Error::Validation(format!(
                    "edge {src} {dst} has weight {w}, weights must be finite and non-negative"
                )));
            }
            let (a, b) = (intern(src), intern(dst));
            if w > 0.0 {
                *directed.entry((a, b)).or_insert(0.0) += w;
            }
        }

        let mut undirected: BTreeMap<(usize, usize), f64> = BTreeMap::new();
        for (&(a, b), &w) in &directed {
            let key = (a.min(b), a.max(b));
            let slot = undirected.entry(key).or_insert(0.0);
            *slot = slot.max(w);
        }

        let mut adjacency = alloc::vec![Vec::new(); ids.len()];
        for (&(a, b), &w) in &undirected {
            let w = if weighted { w } else { 1.0 };
            adjacency[a].push((b, w));
            if a != b {
                adjacency[b].push((a, w));
            }
        }
        for list in &mut adjacency {
            list.sort_by_key(|&(j, _)| j);
        }
        Ok(Graph { ids, adjacency })
    }

    /// Parses an edge list: whitespace separated `src dst [weight]` lines,
    /// `#` comments and blank lines ignored. Line numbers in errors are 1-based.
    pub fn parse_edge_list(text: &str, weighted: bool) -> Result<Graph> {
        let mut records = Vec::new();
        for (n, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let mut fields = line.split_whitespace();
            let parse_err = |message: String| Error::Parse {
                line: n + 1,
                message,
            };
            let src = fields.next().ok_or_else(|| parse_err("missing source".into()))?;
            let dst = fields
                .next()
                .ok_or_else(|| parse_err(format!("expected `src dst [weight]`, got `{line}`")))?;
            let w = match fields.next() {
                None => 1.0,
                Some(raw) => raw
                    .parse::<f64>()
                    .map_err(|_| parse_err(format!("bad weight `{raw}`")))?,
            };
            if fields.next().is_some() {
                return Err(parse_err(format!("too many fields in `{line}`")));
            }
            if w < 0.0 {
                return Err(Error::Validation(format!(
                    "line {}: negative weight {w}",
                    n + 1
                )));
            }
            records.push((src, dst, w));
        }
        Graph::from_edges(records, weighted)
    }

    /// Drops self-loops, then nodes left without edges. Surviving nodes keep
    /// their relative order.
    pub fn preprocess(&self) -> Result<Graph> {
        let n = self.num_nodes();
        let mut keep = Vec::with_capacity(n);
        let mut remap = alloc::vec![usize::MAX; n];
        for i in 0..n {
            if self.adjacency[i].iter().any(|&(j, _)| j != i) {
                remap[i] = keep.len();
                keep.push(i);
            }
        }
        if keep.is_empty() {
            return Err(Error::EmptyGraph);
        }
        let ids = keep.iter().map(|&i| self.ids[i].clone()).collect();
        let adjacency = keep
            .iter()
            .map(|&i| {
                self.adjacency[i]
                    .iter()
                    .filter(|&&(j, _)| j != i)
                    .map(|&(j, w)| (remap[j], w))
                    .collect()
            })
            .collect();
        Ok(Graph { ids, adjacency })
    }

    #[inline]
    pub fn num_nodes(&self) -> usize {
        self.ids.len()
    }

    pub fn num_edges(&self) -> usize {
        self.adjacency
            .iter()
            .enumerate()
            .map(|(i, l)| l.iter().filter(|&&(j, _)| j >= i).count())
            .sum()
    }

    pub fn ids(&self) -> &[String] {
        &self.ids
    }

    pub fn id(&self, i: usize) -> &str {
        &self.ids[i]
    }

    pub fn index_of(&self, id: &str) -> Option<usize> {
        self.ids.iter().position(|x| x == id)
    }

    /// Map from external id to dense index.
    pub fn id_map(&self) -> BTreeMap<&str, usize> {
        self.ids.iter().enumerate().map(|(i, s)| (s.as_str(), i)).collect()
    }

    #[inline]
    pub fn neighbors(&self, i: usize) -> &[(usize, f64)] {
        &self.adjacency[i]
    }

    /// Weighted degree: sum of incident edge weights.
    pub fn degree(&self, i: usize) -> f64 {
        self.adjacency[i].iter().map(|&(_, w)| w).sum()
    }

    pub fn degrees(&self) -> Vec<f64> {
        (0..self.num_nodes()).map(|i| self.degree(i)).collect()
    }

    pub fn has_self_loops(&self) -> bool {
        self.adjacency
            .iter()
            .enumerate()
            .any(|(i, l)| l.iter().any(|&(j, _)| j == i))
    }

    pub fn is_symmetric(&self) -> bool {
        self.adjacency.iter().enumerate().all(|(i, l)| {
            l.iter().all(|&(j, w)| {
                self.adjacency[j]
                    .binary_search_by_key(&i, |&(k, _)| k)
                    .map(|p| self.adjacency[j][p].1 == w)
                    .unwrap_or(false)
            })
        })
    }

    /// Row-normalized 1-step transition matrix.
    pub fn row_normalize(&self) -> Result<TransitionMatrix> {
        let n = self.num_nodes();
        let mut m = Matrix::zeros(n, n);
        for i in 0..n {
            let d = self.degree(i);
            if !(d > 0.0) {
                return Err(Error::Invariant(format!(
                    "node {} has zero degree, run preprocess first",
                    self.ids[i]
                )));
            }
            let row = m.row_mut(i);
            for &(j, w) in &self.adjacency[i] {
                row[j] = w / d;
            }
        }
        Ok(TransitionMatrix(m))
    }
}

/// Dense row-stochastic matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct TransitionMatrix(Matrix);

impl TransitionMatrix {
    /// Wraps a matrix after checking it is square and row-stochastic.
    pub fn new(m: Matrix) -> Result<Self> {
        if m.rows() != m.cols() {
            return Err(Error::shape("square matrix", format_args!("{:?}", m.shape())));
        }
        for i in 0..m.rows() {
            let row = m.row(i);
            if row.iter().any(|&x| !(0.0..=1.0).contains(&x)) {
                return Err(Error::Invariant(format!("row {i} has entries outside [0, 1]")));
            }
            let s: f64 = row.iter().sum();
            if libm::fabs(s - 1.0) > 1e-9 {
                return Err(Error::Invariant(format!("row {i} sums to {s}")));
            }
        }
        Ok(TransitionMatrix(m))
    }

    pub fn matrix(&self) -> &Matrix {
        &self.0
    }

    pub fn size(&self) -> usize {
        self.0.rows()
    }
}
