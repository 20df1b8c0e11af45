//! Exact population objective and gradient by enumerating the joint support.

use super::{grad_pair, loss_dot, EmbeddingTable};
use crate::error::{Error, Result};
use crate::numeric::KahanSum;
use crate::token_space::JointDistribution;

/// Largest support the exact oracles will enumerate.
pub const MAX_ENUMERATED_SUPPORT: usize = 100_000;

pub(crate) fn check_enumerable(theta: &EmbeddingTable, joint: &JointDistribution) -> Result<()> {
    if joint.support_size() > MAX_ENUMERATED_SUPPORT {
        return Err(Error::Capacity {
            size: joint.support_size(),
            limit: MAX_ENUMERATED_SUPPORT,
        });
    }
    if theta.n_users() != joint.n_users() || theta.n_items() != joint.n_items() {
        return Err(Error::invalid(format!(
            "table is {}+{} rows but joint is {}x{}",
            theta.n_users(),
            theta.n_items(),
            joint.n_users(),
            joint.n_items()
        )));
    }
    Ok(())
}

/// `f(Theta) = sum_{(i,j)} D(i,j) l(theta_i, theta_j; y_ij)`.
pub fn population_objective(theta: &EmbeddingTable, joint: &JointDistribution) -> Result<f64> {
    check_enumerable(theta, joint)?;
    let mut acc = KahanSum::new();
    for c in joint.cells() {
        let j = theta.item_row_index(c.item);
        acc.add(c.mass * loss_dot(theta.row(c.user), theta.row(j), c.label));
    }
    Ok(acc.value())
}

/// Exact `grad f(Theta)` as a dense table of the same shape as `theta`.
pub fn population_gradient(
    theta: &EmbeddingTable,
    joint: &JointDistribution,
) -> Result<EmbeddingTable> {
    check_enumerable(theta, joint)?;
    let dim = theta.dim();
    let mut acc = vec![KahanSum::new(); theta.n_rows() * dim];
    for c in joint.cells() {
        let j = theta.item_row_index(c.item);
        let (g_i, g_j) = grad_pair(theta.row(c.user), theta.row(j), c.label);
        for (a, g) in acc[c.user * dim..(c.user + 1) * dim].iter_mut().zip(&g_i) {
            a.add(c.mass * g);
        }
        for (a, g) in acc[j * dim..(j + 1) * dim].iter_mut().zip(&g_j) {
            a.add(c.mass * g);
        }
    }
    EmbeddingTable::from_rows(
        theta.n_users(),
        theta.n_items(),
        dim,
        acc.iter().map(KahanSum::value).collect(),
    )
}
