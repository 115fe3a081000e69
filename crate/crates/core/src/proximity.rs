//! High-order proximity and shifted PPMI features.
//!
//! `M = Â + Â² + … + Âᵗ` followed by
//! `X_ij = max(ln(M_ij / Σ_k M_kj) − ln β, 0)`.

use alloc::format;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::graph::{Graph, TransitionMatrix};
use crate::matrix::{axpy, Matrix, SparseRows};

pub const DEFAULT_STEPS: usize = 4;
pub const DEFAULT_MAX_NODES: usize = 20_000;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PpmiConfig {
    /// Highest transition power `t`.
    pub steps: usize,
    /// Shift `β`; `None` means `1/N`.
    pub beta: Option<f64>,
    /// Dense N×N matrices are refused above this node count.
    pub max_nodes: usize,
}

impl Default for PpmiConfig {
    fn default() -> Self {
        PpmiConfig {
            steps: DEFAULT_STEPS,
            beta: None,
            max_nodes: DEFAULT_MAX_NODES,
        }
    }
}

impl PpmiConfig {
    pub fn resolved_beta(&self, n: usize) -> f64 {
        self.beta.unwrap_or(1.0 / n as f64)
    }
}

/// Shifted PPMI feature matrix with the parameters that produced it.
#[derive(Debug, Clone, PartialEq)]
pub struct PpmiMatrix {
    pub values: Matrix,
    pub steps: usize,
    pub beta: f64,
    /// Columns of `M` whose sum was zero; their outputs are all zero.
    pub zero_columns: usize,
}

impl PpmiMatrix {
    pub fn size(&self) -> usize {
        self.values.rows()
    }

    pub fn to_sparse(&self) -> SparseRows {
        SparseRows::from_dense(&self.values)
    }
}

/// `M = Σ_{k=1..t} Âᵏ` by repeated right-multiplication with `Â`.
///
/// Zero entries are skipped, which leaves the i-k-j summation order (and so
/// the bits of the result) identical to the dense product.
pub fn accumulate_powers(a_hat: &TransitionMatrix, steps: usize) -> Result<Matrix> {
    if steps == 0 {
        return Err(Error::InvalidArgument("transition steps t must be at least 1".into()));
    }
    let a = a_hat.matrix();
    let n = a.rows();
    let sparse = SparseRows::from_dense(a);

    let mut power = a.clone();
    let mut total = a.clone();
    for _ in 1..steps {
        let mut next = Matrix::zeros(n, n);
        for i in 0..n {
            let dst = next.row_mut(i);
            for (k, &p) in power.row(i).iter().enumerate() {
                if p == 0.0 {
                    continue;
                }
                let (idx, val) = sparse.row(k);
                for (&j, &v) in idx.iter().zip(val) {
                    dst[j as usize] += p * v;
                }
            }
        }
        for (t, p) in total.as_mut_slice().iter_mut().zip(next.as_slice()) {
            *t += p;
        }
        power = next;
    }
    Ok(total)
}

/// Shifted positive PMI. Cells with `M_ij = 0` are exactly zero.
pub fn shifted_ppmi(m: &Matrix, beta: f64) -> Result<PpmiMatrix> {
    if !(beta > 0.0) || !beta.is_finite() {
        return Err(Error::InvalidArgument(format!("beta must be positive, got {beta}")));
    }
    if m.as_slice().iter().any(|&x| !(x >= 0.0) || !x.is_finite()) {
        return Err(Error::InvalidArgument("proximity matrix must be finite and non-negative".into()));
    }
    let (rows, cols) = m.shape();
    let mut colsum = alloc::vec![0.0; cols];
    for i in 0..rows {
        axpy(1.0, m.row(i), &mut colsum);
    }
    let zero_columns = colsum.iter().filter(|&&s| s == 0.0).count();
    let log_beta = libm::log(beta);
    let mut values = Matrix::zeros(rows, cols);
    for i in 0..rows {
        let src = m.row(i);
        let dst = values.row_mut(i);
        for j in 0..cols {
            let mij = src[j];
            if mij == 0.0 || colsum[j] == 0.0 {
                continue;
            }
            let x = libm::log(mij / colsum[j]) - log_beta;
            if x > 0.0 {
                dst[j] = x;
            }
        }
    }
    Ok(PpmiMatrix {
        values,
        steps: 0,
        beta,
        zero_columns,
    })
}

/// Full pipeline from a preprocessed graph to the feature matrix `X`.
pub fn ppmi_features(graph: &Graph, cfg: &PpmiConfig) -> Result<PpmiMatrix> {
    let n = graph.num_nodes();
    if n > cfg.max_nodes {
        return Err(Error::TooLarge {
            what: "node count",
            size: n,
            limit: cfg.max_nodes,
        });
    }
    let a_hat = graph.row_normalize()?;
    let m = accumulate_powers(&a_hat, cfg.steps)?;
    let mut x = shifted_ppmi(&m, cfg.resolved_beta(n))?;
    x.steps = cfg.steps;
    Ok(x)
}

/// Column sums, exposed for diagnostics.
pub fn column_sums(m: &Matrix) -> Vec<f64> {
    let mut out = alloc::vec![0.0; m.cols()];
    for i in 0..m.rows() {
        axpy(1.0, m.row(i), &mut out);
    }
    out
}
