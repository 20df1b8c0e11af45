//! Factorization machine with logistic loss over a set of active tokens.

use super::{EmbeddingTable, SparseGradient};
use crate::error::{Error, Result};
use crate::numeric::{dot, log1p_exp};
use crate::token_space::Label;

/// One interaction: the active (stacked) token indices and the label.
#[derive(Debug, Clone, PartialEq)]
pub struct Example {
    pub tokens: Vec<usize>,
    pub label: Label,
}

impl Example {
    /// A user/item pair; `item` is local to the item set.
    pub fn pair(user: usize, item: usize, n_users: usize, label: Label) -> Self {
        Self {
            tokens: vec![user, n_users + item],
            label,
        }
    }

    pub fn validate(&self, n_tokens: usize) -> Result<()> {
        for (a, &k) in self.tokens.iter().enumerate() {
            if k >= n_tokens {
                return Err(Error::invalid(format!(
                    "token {k} out of range for {n_tokens} tokens"
                )));
            }
            if self.tokens[..a].contains(&k) {
                return Err(Error::invalid(format!("token {k} repeated in example")));
            }
        }
        Ok(())
    }
}

/// Bias, per-token linear weights and per-token factor vectors.
#[derive(Debug, Clone, PartialEq)]
pub struct FmParams {
    pub bias: f64,
    pub linear: Vec<f64>,
    pub embeddings: EmbeddingTable,
}

impl FmParams {
    /// Zero bias and linear terms around the given factor table.
    pub fn new(embeddings: EmbeddingTable) -> Self {
        Self {
            bias: 0.0,
            linear: vec![0.0; embeddings.n_rows()],
            embeddings,
        }
    }

    pub fn n_tokens(&self) -> usize {
        self.linear.len()
    }

    pub fn is_finite(&self) -> bool {
        self.bias.is_finite()
            && self.linear.iter().all(|x| x.is_finite())
            && self.embeddings.is_finite()
    }
}

/// Gradient of the FM logistic loss restricted to the touched parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct FmGradient {
    pub bias: f64,
    pub linear: Vec<(usize, f64)>,
    pub embedding: SparseGradient,
}

/// Logit `w0 + sum_k w_k + sum_{k<l} <v_k, v_l>`.
pub fn fm_predict(example: &Example, params: &FmParams) -> f64 {
    let mut logit = params.bias;
    for &k in &example.tokens {
        logit += params.linear[k];
    }
    let toks = &example.tokens;
    for a in 0..toks.len() {
        for b in a + 1..toks.len() {
            logit += dot(params.embeddings.row(toks[a]), params.embeddings.row(toks[b]));
        }
    }
    logit
}

pub fn fm_loss(example: &Example, params: &FmParams) -> f64 {
    log1p_exp(-example.label.sign() * fm_predict(example, params))
}

pub fn fm_grad(example: &Example, params: &FmParams) -> FmGradient {
    let logit = fm_predict(example, params);
    let coef = super::dot::score_derivative(logit, example.label);
    let dim = params.embeddings.dim();

    let mut total = vec![0.0; dim];
    for &k in &example.tokens {
        for (t, v) in total.iter_mut().zip(params.embeddings.row(k)) {
            *t += v;
        }
    }
    let rows = example
        .tokens
        .iter()
        .map(|&k| {
            // d/dv_k sum_{a<b} <v_a, v_b> = sum_{l != k} v_l
            let g = total
                .iter()
                .zip(params.embeddings.row(k))
                .map(|(t, v)| coef * (t - v))
                .collect();
            (k, g)
        })
        .collect();
    FmGradient {
        bias: coef,
        linear: example.tokens.iter().map(|&k| (k, coef)).collect(),
        embedding: SparseGradient::from_rows(rows),
    }
}
