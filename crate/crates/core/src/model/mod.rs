//! Embedding table, the dot-product and factorization-machine losses with
//! their hand-derived gradients, and exact population oracles.

mod dot;
mod embedding;
mod fm;
mod population;

pub use dot::{grad_pair, loss_dot, score_derivative, smoothness_bound};
pub use embedding::EmbeddingTable;
pub use fm::{fm_grad, fm_loss, fm_predict, Example, FmGradient, FmParams};
pub(crate) use population::check_enumerable;
pub use population::{
    population_gradient, population_objective, MAX_ENUMERATED_SUPPORT,
};

use crate::error::{Error, Result};

/// Row-sparse gradient: distinct row indices, each with a dense row vector.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct SparseGradient {
    entries: Vec<(usize, Vec<f64>)>,
}

impl SparseGradient {
    pub fn new() -> Self {
        Self::default()
    }

    /// Builds from rows; repeated indices are summed.
    pub fn from_rows(rows: Vec<(usize, Vec<f64>)>) -> Self {
        let mut g = Self::new();
        for (k, v) in rows {
            g.accumulate(k, &v, 1.0);
        }
        g
    }

    /// Adds `scale * v` into row `k`.
    pub fn accumulate(&mut self, k: usize, v: &[f64], scale: f64) {
        match self.entries.iter_mut().find(|(r, _)| *r == k) {
            Some((_, row)) => {
                for (a, b) in row.iter_mut().zip(v) {
                    *a += scale * b;
                }
            }
            None => self.entries.push((k, v.iter().map(|x| scale * x).collect())),
        }
    }

    pub fn rows(&self) -> impl Iterator<Item = (usize, &[f64])> {
        self.entries.iter().map(|(k, v)| (*k, v.as_slice()))
    }

    pub fn row(&self, k: usize) -> Option<&[f64]> {
        self.entries
            .iter()
            .find(|(r, _)| *r == k)
            .map(|(_, v)| v.as_slice())
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn is_finite(&self) -> bool {
        self.entries.iter().all(|(_, v)| v.iter().all(|x| x.is_finite()))
    }

    pub fn check_rows(&self, n_rows: usize) -> Result<()> {
        match self.entries.iter().find(|(k, _)| *k >= n_rows) {
            Some((k, _)) => Err(Error::invalid(format!(
                "gradient row {k} out of range for {n_rows} rows"
            ))),
            None => Ok(()),
        }
    }
}

/// Sparse stochastic gradient of the dot loss for one sampled pair: only the
/// user row and the item row are present.
pub fn pair_gradient(
    theta: &EmbeddingTable,
    user: usize,
    item: usize,
    y: crate::token_space::Label,
) -> SparseGradient {
    let j = theta.item_row_index(item);
    let (g_i, g_j) = grad_pair(theta.row(user), theta.row(j), y);
    SparseGradient {
        entries: vec![(user, g_i), (j, g_j)],
    }
}
