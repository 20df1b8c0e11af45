//! Logistic dot-product loss `l(u, v; y) = log(1 + exp(-y <u, v>))`.
//!
//! This is the loss the convergence theory is checked against: it is
//! symmetric in `u` and `v`, and on the ball `|u|, |v| <= R` its Hessian
//! blocks are bounded by [`smoothness_bound`].

use crate::error::{Error, Result};
use crate::numeric::{dot, log1p_exp, sigmoid};
use crate::token_space::Label;

pub fn loss_dot(theta_i: &[f64], theta_j: &[f64], y: Label) -> f64 {
    log1p_exp(-y.sign() * dot(theta_i, theta_j))
}

/// Derivative of the loss with respect to the score `<u, v>`.
pub fn score_derivative(score: f64, y: Label) -> f64 {
    let s = y.sign();
    -s * sigmoid(-s * score)
}

/// Gradients of [`loss_dot`] with respect to both rows.
pub fn grad_pair(theta_i: &[f64], theta_j: &[f64], y: Label) -> (Vec<f64>, Vec<f64>) {
    let coef = score_derivative(dot(theta_i, theta_j), y);
    let g_i = theta_j.iter().map(|v| coef * v).collect();
    let g_j = theta_i.iter().map(|u| coef * u).collect();
    (g_i, g_j)
}

/// `L(R) = 1 + R^2 / 4`.
///
/// With `s = <u, v>` and `w = sigma(s)(1 - sigma(s)) <= 1/4`, the blocks are
/// `H_uu = w v v^T` and `H_uv = w v u^T - y sigma(-y s) I`, so on the ball
/// `|H_uu| <= R^2/4` and `|H_uv| <= 1 + R^2/4`.
pub fn smoothness_bound(radius: f64) -> Result<f64> {
    if !(radius > 0.0 && radius.is_finite()) {
        return Err(Error::invalid(format!("radius must be positive, got {radius}")));
    }
    Ok(1.0 + radius * radius / 4.0)
}
