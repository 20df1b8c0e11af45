use std::fmt::Write as _;

use crate::csv::fmt17;
use crate::error::{Error, Result};
use crate::numeric::compensated_sum;

const SUM_TOL: f64 = 1e-12;

/// Marginal token frequencies over one token set (users or items).
///
/// Storage is 0-based; the tail constructors and [`TokenDistribution::top_set`]
/// speak in 1-based ranks, `rank = index + 1`.
#[derive(Debug, Clone, PartialEq)]
pub struct TokenDistribution {
    probs: Vec<f64>,
    sorted_by_rank: bool,
}

impl TokenDistribution {
    /// Validates and wraps an arbitrary probability vector.
    pub fn from_probs(probs: Vec<f64>) -> Result<Self> {
        Self::checked(probs, false)
    }

    /// Empirical frequencies from per-token counts. Tokens with zero count are
    /// rejected since every entry must be positive.
    pub fn from_counts(counts: &[u64]) -> Result<Self> {
        let total: u64 = counts.iter().sum();
        if total == 0 {
            return Err(Error::invalid("all counts are zero"));
        }
        if let Some(k) = counts.iter().position(|&c| c == 0) {
            return Err(Error::invalid(format!("token {k} has zero count")));
        }
        let probs = counts.iter().map(|&c| c as f64 / total as f64).collect();
        Self::checked(probs, false)
    }

    fn checked(probs: Vec<f64>, sorted_by_rank: bool) -> Result<Self> {
        if probs.is_empty() {
            return Err(Error::invalid("distribution must have at least one token"));
        }
        if let Some((k, p)) = probs
            .iter()
            .enumerate()
            .find(|(_, &p)| !(p > 0.0 && p <= 1.0))
        {
            return Err(Error::invalid(format!(
                "probability of token {k} is {p}, outside (0, 1]"
            )));
        }
        let total = compensated_sum(probs.iter().copied());
        if (total - 1.0).abs() > SUM_TOL {
            return Err(Error::invalid(format!("probabilities sum to {total}")));
        }
        if sorted_by_rank && probs.windows(2).any(|w| w[1] > w[0]) {
            return Err(Error::invalid("rank-sorted distribution is not non-increasing"));
        }
        Ok(Self {
            probs,
            sorted_by_rank,
        })
    }

    /// `p_n ∝ exp(-tau n)` for ranks `n = 1..=size`.
    pub fn exp_tail(size: usize, tau: f64) -> Result<Self> {
        if size == 0 {
            return Err(Error::invalid("size must be at least 1"));
        }
        if !(tau > 0.0 && tau.is_finite()) {
            return Err(Error::invalid(format!("tau must be positive, got {tau}")));
        }
        // M = (1 - e^{-tau}) / (e^{-tau} (1 - e^{-tau size})), applied in log space
        // so the head stays exact; entries that underflow are rejected below.
        let log_m = (-(-tau).exp_m1()).ln() + tau - (-(-tau * size as f64).exp_m1()).ln();
        let probs: Vec<f64> = (1..=size)
            .map(|n| (log_m - tau * n as f64).exp())
            .collect();
        if probs.last().is_some_and(|&p| p == 0.0) {
            return Err(Error::invalid(format!(
                "exp tail with tau={tau} underflows before rank {size}"
            )));
        }
        Self::checked(probs, true)
    }

    /// `p_n ∝ n^{-nu}` for ranks `n = 1..=size`, `nu >= 2`.
    pub fn poly_tail(size: usize, nu: f64) -> Result<Self> {
        if size == 0 {
            return Err(Error::invalid("size must be at least 1"));
        }
        if !(nu >= 2.0 && nu.is_finite()) {
            return Err(Error::invalid(format!("nu must be at least 2, got {nu}")));
        }
        let weights: Vec<f64> = (1..=size).map(|n| (n as f64).powf(-nu)).collect();
        // smallest terms first
        let norm = compensated_sum(weights.iter().rev().copied());
        Self::checked(weights.into_iter().map(|w| w / norm).collect(), true)
    }

    pub fn uniform(size: usize) -> Result<Self> {
        if size == 0 {
            return Err(Error::invalid("size must be at least 1"));
        }
        Self::checked(vec![1.0 / size as f64; size], true)
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    pub fn len(&self) -> usize {
        self.probs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.probs.is_empty()
    }

    pub fn is_sorted_by_rank(&self) -> bool {
        self.sorted_by_rank
    }

    /// Probability of the token at 1-based `rank`.
    pub fn at_rank(&self, rank: usize) -> Option<f64> {
        rank.checked_sub(1).and_then(|i| self.probs.get(i).copied())
    }

    /// Ranks whose frequency is within `factor` of the highest one:
    /// `{n : p_n >= p_1 / factor}`, returned 1-based and ascending.
    pub fn top_set(&self, factor: f64) -> Result<Vec<usize>> {
        if !(factor > 1.0) {
            return Err(Error::invalid(format!("factor must exceed 1, got {factor}")));
        }
        if !self.sorted_by_rank {
            return Err(Error::invalid("top_set needs a rank-sorted distribution"));
        }
        let threshold = self.probs[0] / factor;
        Ok(self
            .probs
            .iter()
            .enumerate()
            .filter(|(_, &p)| p >= threshold)
            .map(|(i, _)| i + 1)
            .collect())
    }

    /// CSV with header `rank,prob`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("rank,prob\n");
        for (i, p) in self.probs.iter().enumerate() {
            let _ = writeln!(out, "{},{}", i + 1, fmt17(*p));
        }
        out
    }
}
