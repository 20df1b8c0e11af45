//! Exact enumeration oracles for the sparse stochastic gradient.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::model::{check_enumerable, grad_pair, population_gradient, EmbeddingTable};
use crate::numeric::{compensated_sum, norm_sq, KahanSum};
use crate::rng::StreamRng;
use crate::token_space::{Cell, JointDistribution, Label};

/// Exact first and second moments of the one-sample gradient at a fixed table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VarianceReport {
    /// `E |g - grad f|^2`.
    pub exact_variance: f64,
    /// `sum_k (1/p_k - 1) |grad f_k|^2`.
    pub lower_bound: f64,
    /// `lower_bound + sum_k p_k sigma_k^2`.
    pub upper_bound: f64,
    /// Conditional variance of each token's gradient row given that the token
    /// is sampled, over stacked token indices. Zero for unsampled tokens.
    pub per_token_sigma2: Vec<f64>,
}

impl VarianceReport {
    pub fn lower_slack(&self) -> f64 {
        self.exact_variance - self.lower_bound
    }

    pub fn upper_slack(&self) -> f64 {
        self.upper_bound - self.exact_variance
    }
}

/// Random enumerable instance: up to `max_side` users and items, up to
/// `max_dim` columns, positive cell masses and random labels.
pub fn random_instance(
    rng: &mut StreamRng,
    max_side: usize,
    max_dim: usize,
) -> Result<(EmbeddingTable, JointDistribution)> {
    let users = rng.gen_range(1..=max_side);
    let items = rng.gen_range(1..=max_side);
    let dim = rng.gen_range(1..=max_dim);
    let raw: Vec<f64> = (0..users * items).map(|_| rng.gen_range(0.05..1.0)).collect();
    let total = compensated_sum(raw.iter().copied());
    let cells = raw
        .iter()
        .enumerate()
        .map(|(c, w)| Cell {
            user: c / items,
            item: c % items,
            mass: w / total,
            label: if rng.gen_bool(0.5) { Label::Pos } else { Label::Neg },
        })
        .collect();
    let joint = JointDistribution::from_cells(users, items, cells)?;
    let theta = EmbeddingTable::init_uniform(users, items, dim, rng);
    Ok((theta, joint))
}

fn row_range(k: usize, dim: usize) -> std::ops::Range<usize> {
    k * dim..(k + 1) * dim
}

/// Maximum entrywise deviation between the enumerated `E[g]` and the
/// population gradient, also covering the per-token conditional identity
/// `E[g_k | k sampled] = grad f_k / p_k`.
pub fn check_unbiasedness(theta: &EmbeddingTable, joint: &JointDistribution) -> Result<f64> {
    check_enumerable(theta, joint)?;
    let dim = theta.dim();
    let n = theta.n_rows();
    let p = joint.token_probs();
    let full = population_gradient(theta, joint)?;

    // E[g] accumulated per cell in column order, and the conditional means
    let mut mean = vec![KahanSum::new(); n * dim];
    let mut cond = vec![KahanSum::new(); n * dim];
    let mut order: Vec<usize> = (0..joint.cells().len()).collect();
    order.sort_by_key(|&c| (joint.cells()[c].item, joint.cells()[c].user));
    for c in order {
        let cell = &joint.cells()[c];
        let j = theta.item_row_index(cell.item);
        let (g_i, g_j) = grad_pair(theta.row(cell.user), theta.row(j), cell.label);
        for (k, g) in [(cell.user, &g_i), (j, &g_j)] {
            let w = cell.mass / p[k];
            for (idx, x) in row_range(k, dim).zip(g) {
                mean[idx].add(cell.mass * x);
                cond[idx].add(w * x);
            }
        }
    }

    let mut worst = 0.0f64;
    for k in 0..n {
        let target = full.row(k);
        for (t, idx) in target.iter().zip(row_range(k, dim)) {
            worst = worst.max((mean[idx].value() - t).abs());
            if p[k] > 0.0 {
                worst = worst.max((cond[idx].value() - t / p[k]).abs());
            }
        }
    }
    Ok(worst)
}

/// Exact variance of the one-sample gradient and its per-token decomposition.
pub fn variance_report(theta: &EmbeddingTable, joint: &JointDistribution) -> Result<VarianceReport> {
    check_enumerable(theta, joint)?;
    let n = theta.n_rows();
    let p = joint.token_probs();
    let full = population_gradient(theta, joint)?;
    let row_norms: Vec<f64> = (0..n).map(|k| norm_sq(full.row(k))).collect();
    let total_norm = compensated_sum(row_norms.iter().copied());

    let mut exact = KahanSum::new();
    let mut sigma2 = vec![KahanSum::new(); n];
    for cell in joint.cells() {
        let j = theta.item_row_index(cell.item);
        let (g_i, g_j) = grad_pair(theta.row(cell.user), theta.row(j), cell.label);
        // |g - grad f|^2 differs from |grad f|^2 only on the two sampled rows
        let mut dev = total_norm;
        for (k, g) in [(cell.user, &g_i), (j, &g_j)] {
            let f = full.row(k);
            let around_full: f64 = g.iter().zip(f).map(|(a, b)| (a - b) * (a - b)).sum();
            dev += around_full - row_norms[k];
            let around_cond: f64 = g
                .iter()
                .zip(f)
                .map(|(a, b)| {
                    let d = a - b / p[k];
                    d * d
                })
                .sum();
            sigma2[k].add(cell.mass / p[k] * around_cond);
        }
        exact.add(cell.mass * dev);
    }

    let per_token_sigma2: Vec<f64> = sigma2.iter().map(KahanSum::value).collect();
    let mut lower = KahanSum::new();
    let mut extra = KahanSum::new();
    for k in 0..n {
        if p[k] > 0.0 {
            lower.add((1.0 / p[k] - 1.0) * row_norms[k]);
            extra.add(p[k] * per_token_sigma2[k]);
        }
    }
    Ok(VarianceReport {
        exact_variance: exact.value(),
        lower_bound: lower.value(),
        upper_bound: lower.value() + extra.value(),
        per_token_sigma2,
    })
}
