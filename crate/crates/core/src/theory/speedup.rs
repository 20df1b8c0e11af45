//! Per-token smoothness, the frequency-aware improvement ratio and the
//! tail-distribution speedup factors.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numeric::compensated_sum;
use crate::token_space::TokenDistribution;

/// `2 L p_k` for the token at 1-based `rank`.
pub fn block_smoothness(smoothness: f64, dist: &TokenDistribution, rank: usize) -> Result<f64> {
    let p = dist
        .at_rank(rank)
        .ok_or_else(|| Error::invalid(format!("rank {rank} out of range 1..={}", dist.len())))?;
    Ok(2.0 * smoothness * p)
}

fn stacked_probs(users: &TokenDistribution, items: &TokenDistribution) -> Vec<f64> {
    users.probs().iter().chain(items.probs()).copied().collect()
}

/// `sqrt(p_k sum_l p_l sigma_l^2) / sqrt(sum_l p_l^2 sigma_l^2)` over the
/// stacked user+item token set; `token` is a stacked index.
pub fn improvement_ratio(
    users: &TokenDistribution,
    items: &TokenDistribution,
    sigma2: &[f64],
    token: usize,
) -> Result<f64> {
    Ok(improvement_ratios(users, items, sigma2)?[token_checked(users, items, token)?])
}

fn token_checked(users: &TokenDistribution, items: &TokenDistribution, token: usize) -> Result<usize> {
    let n = users.len() + items.len();
    if token >= n {
        return Err(Error::invalid(format!("token {token} out of range for {n} tokens")));
    }
    Ok(token)
}

/// [`improvement_ratio`] for every stacked token.
pub fn improvement_ratios(
    users: &TokenDistribution,
    items: &TokenDistribution,
    sigma2: &[f64],
) -> Result<Vec<f64>> {
    improvement_ratios_from_probs(&stacked_probs(users, items), sigma2)
}

/// [`improvement_ratios`] over an explicit stacked probability vector, which
/// may contain zeros (tokens never observed).
pub fn improvement_ratios_from_probs(p: &[f64], sigma2: &[f64]) -> Result<Vec<f64>> {
    if sigma2.len() != p.len() {
        return Err(Error::invalid(format!(
            "{} sigma^2 values for {} tokens",
            sigma2.len(),
            p.len()
        )));
    }
    if let Some(s) = sigma2.iter().find(|s| !(**s >= 0.0 && s.is_finite())) {
        return Err(Error::invalid(format!("sigma^2 must be non-negative, got {s}")));
    }
    if sigma2.iter().all(|&s| s == 0.0) {
        return Err(Error::invalid("sigma^2 is zero for every token"));
    }
    let first = compensated_sum(p.iter().zip(sigma2).map(|(p, s)| p * s));
    let second = compensated_sum(p.iter().zip(sigma2).map(|(p, s)| p * p * s));
    Ok(p.iter().map(|pk| (pk * first).sqrt() / second.sqrt()).collect())
}

/// Shape of a rank-sorted tail.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum TailKind {
    Exp { tau: f64 },
    Poly { nu: f64 },
}

impl TailKind {
    /// Frequency factor defining the top set: `e` for exponential tails,
    /// `16` for polynomial ones.
    pub fn top_factor(self) -> f64 {
        match self {
            TailKind::Exp { .. } => std::f64::consts::E,
            TailKind::Poly { .. } => POLY_CONSTANT,
        }
    }

    fn matches(self, dist: &TokenDistribution) -> bool {
        if !dist.is_sorted_by_rank() || dist.len() < 2 {
            return dist.is_sorted_by_rank();
        }
        let p = dist.probs();
        let (got, want) = match self {
            TailKind::Exp { tau } => (p[0] / p[1], tau.exp()),
            TailKind::Poly { nu } => (p[0] / p[1], 2f64.powf(nu)),
        };
        ((got - want) / want).abs() < 1e-9
    }
}

/// Predicted speedup for the token at 1-based `rank`: `exp(tau (n - |U_T|))`
/// or `(n / |U_T|)^nu`, with `U_T = top_set(kind.top_factor())`.
pub fn tail_speedup_bound(dist: &TokenDistribution, kind: TailKind, rank: usize) -> Result<f64> {
    if rank == 0 || rank > dist.len() {
        return Err(Error::invalid(format!("rank {rank} out of range 1..={}", dist.len())));
    }
    if !kind.matches(dist) {
        return Err(Error::invalid(format!("distribution is not a {kind:?} tail")));
    }
    let top = dist.top_set(kind.top_factor())?.len() as f64;
    let n = rank as f64;
    Ok(match kind {
        TailKind::Exp { tau } => (tau * (n - top)).exp(),
        TailKind::Poly { nu } => (n / top).powf(nu),
    })
}

/// Per-token improvement ratios alongside the predicted tail factor per rank.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpeedupReport {
    pub per_token_ratio: Vec<f64>,
    pub tail_factor_bound: Vec<f64>,
}

pub fn speedup_report(
    users: &TokenDistribution,
    items: &TokenDistribution,
    sigma2: &[f64],
    kind: TailKind,
) -> Result<SpeedupReport> {
    Ok(SpeedupReport {
        per_token_ratio: improvement_ratios(users, items, sigma2)?,
        tail_factor_bound: (1..=users.len())
            .map(|n| tail_speedup_bound(users, kind, n))
            .collect::<Result<_>>()?,
    })
}

/// Polynomial-tail constant.
pub const POLY_CONSTANT: f64 = 16.0;

/// `(1 + e^{-tau}) / (1 - e^{-tau})`, the all-rank exponential constant.
pub fn exp_rank_constant(tau: f64) -> f64 {
    (1.0 + (-tau).exp()) / -(-tau).exp_m1()
}

/// `2 / (1 - e^{-1})`, the exponential constant once both sides have at
/// least `1/tau` tokens.
pub fn exp_asymptotic_constant() -> f64 {
    2.0 / -(-1f64).exp_m1()
}

/// Outcome of checking `2 p_n / sum_{l in X} p_l^2 <= C g(n)` at every rank.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TailBoundCheck {
    pub size: usize,
    pub constant: f64,
    /// `max_n ln(lhs_n) - ln(C g(n))`; the bound holds when this is `<= 0`.
    pub max_log_excess: f64,
    /// Rank attaining the maximum.
    pub worst_rank: usize,
}

impl TailBoundCheck {
    pub fn holds(&self) -> bool {
        self.max_log_excess <= 1e-12
    }

    fn from_excess(size: usize, constant: f64, excess: impl Iterator<Item = f64>) -> Self {
        let (worst_rank, max_log_excess) = excess
            .enumerate()
            .fold((1, f64::NEG_INFINITY), |(r, m), (i, x)| if x > m { (i + 1, x) } else { (r, m) });
        Self {
            size,
            constant,
            max_log_excess,
            worst_rank,
        }
    }
}

/// `ln(sum_{x in 0..n} e^{-a x})` without cancellation.
fn ln_geometric(a: f64, n: usize) -> f64 {
    (-(-a * n as f64).exp_m1()).ln() - (-(-a).exp_m1()).ln()
}

/// `ln(2 p_n / sum_{l in X} p_l^2)` for ranks `1..=size` when users and items
/// both follow `p_n ∝ e^{-tau n}` over `size` tokens. Evaluated in closed
/// form so sizes whose tail underflows are still covered.
pub fn exp_tail_log_ratios(size: usize, tau: f64) -> Result<Vec<f64>> {
    if size == 0 || !(tau > 0.0 && tau.is_finite()) {
        return Err(Error::invalid(format!("need size >= 1 and tau > 0, got {size}, {tau}")));
    }
    // p_n = e^{-tau (n - 1)} / G(tau), G(a) = sum_{x < size} e^{-a x}
    let ln_g1 = ln_geometric(tau, size);
    let ln_g2 = ln_geometric(2.0 * tau, size);
    // sum_X p^2 = 2 G(2 tau) / G(tau)^2, so 2 p_n / sum = e^{-tau(n-1)} G(tau) / G(2 tau)
    Ok((1..=size)
        .map(|n| -tau * (n - 1) as f64 + ln_g1 - ln_g2)
        .collect())
}

/// Checks the exponential-tail bound `C e^{-tau (n - shift)}` at every rank.
pub fn check_exp_tail_bound(size: usize, tau: f64, constant: f64, shift: f64) -> Result<TailBoundCheck> {
    let ln_c = constant.ln();
    let ratios = exp_tail_log_ratios(size, tau)?;
    Ok(TailBoundCheck::from_excess(
        size,
        constant,
        ratios
            .into_iter()
            .enumerate()
            .map(|(i, r)| r - (ln_c - tau * ((i + 1) as f64 - shift))),
    ))
}

/// Checks `2 p_n / sum_{l in X} p_l^2 <= 16 n^{-nu}` at every rank with both
/// sides following `poly_tail(size, nu)`.
pub fn check_poly_tail_bound(size: usize, nu: f64) -> Result<TailBoundCheck> {
    let d = TokenDistribution::poly_tail(size, nu)?;
    let sum_sq = 2.0 * compensated_sum(d.probs().iter().rev().map(|p| p * p));
    let ln_c = POLY_CONSTANT.ln();
    Ok(TailBoundCheck::from_excess(
        size,
        POLY_CONSTANT,
        d.probs()
            .iter()
            .enumerate()
            .map(|(i, p)| (2.0 * p / sum_sq).ln() - (ln_c - nu * ((i + 1) as f64).ln())),
    ))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn block_smoothness_examples() {
        let u = TokenDistribution::uniform(2).unwrap();
        assert_eq!(block_smoothness(1.0, &u, 1).unwrap(), 1.0);
        let e = TokenDistribution::exp_tail(3, std::f64::consts::LN_2).unwrap();
        assert!((block_smoothness(3.0, &e, 1).unwrap() - 24.0 / 7.0).abs() < 1e-14);
        let total: f64 = (1..=3).map(|k| block_smoothness(3.0, &e, k).unwrap()).sum();
        assert!((total - 6.0).abs() < 1e-14);
        assert!(block_smoothness(1.0, &u, 3).is_err());
    }

    #[test]
    fn improvement_ratio_uniform_is_one() {
        for n in [1, 2, 7, 50] {
            let u = TokenDistribution::uniform(n).unwrap();
            let sigma = vec![0.7; 2 * n];
            for g in improvement_ratios(&u, &u, &sigma).unwrap() {
                assert!((g - 1.0).abs() < 1e-12);
            }
        }
        let one = TokenDistribution::uniform(1).unwrap();
        assert_eq!(improvement_ratio(&one, &one, &[1.0, 1.0], 1).unwrap(), 1.0);
    }

    #[test]
    fn improvement_ratio_follows_sqrt_law() {
        let tau = 0.4;
        let d = TokenDistribution::exp_tail(20, tau).unwrap();
        let g = improvement_ratios(&d, &d, &vec![1.0; 40]).unwrap();
        for n in 1..=20 {
            let want = (-tau * (n - 1) as f64 / 2.0).exp();
            assert!((g[n - 1] / g[0] - want).abs() < 1e-12);
        }
        assert!(improvement_ratios(&d, &d, &vec![0.0; 40]).is_err());
        assert!(improvement_ratios(&d, &d, &[1.0]).is_err());
    }

    #[test]
    fn tail_speedup_examples() {
        let e = TokenDistribution::exp_tail(10, 1.0).unwrap();
        let top = e.top_set(std::f64::consts::E).unwrap().len();
        assert_eq!(tail_speedup_bound(&e, TailKind::Exp { tau: 1.0 }, top).unwrap(), 1.0);
        assert_eq!(top, 1);
        assert!((tail_speedup_bound(&e, TailKind::Exp { tau: 1.0 }, 4).unwrap() - 20.0855).abs() < 1e-3);

        let p = TokenDistribution::poly_tail(10, 2.0).unwrap();
        assert_eq!(tail_speedup_bound(&p, TailKind::Poly { nu: 2.0 }, 8).unwrap(), 4.0);
        assert!(tail_speedup_bound(&p, TailKind::Exp { tau: 1.0 }, 8).is_err());
        assert!(tail_speedup_bound(&p, TailKind::Poly { nu: 2.0 }, 11).is_err());
    }

    #[test]
    fn closed_form_matches_direct_sum() {
        for (size, tau) in [(10, 0.1), (100, 0.5), (40, 1.0), (12, 2.0)] {
            let d = TokenDistribution::exp_tail(size, tau).unwrap();
            let sum_sq: f64 = 2.0 * d.probs().iter().map(|p| p * p).sum::<f64>();
            let closed = exp_tail_log_ratios(size, tau).unwrap();
            for (p, c) in d.probs().iter().zip(closed) {
                assert!(((2.0 * p / sum_sq).ln() - c).abs() < 1e-10);
            }
        }
    }

    #[test]
    fn constants() {
        assert!((exp_asymptotic_constant() - 3.1639534).abs() < 1e-6);
        assert!((exp_rank_constant(1.0) - 2.1639534).abs() < 1e-6);
    }

    #[test]
    fn poly_bound_holds_on_grid() {
        for nu in [2.0, 3.0, 4.0] {
            for size in [10, 100, 1000] {
                let c = check_poly_tail_bound(size, nu).unwrap();
                assert!(c.holds(), "{c:?}");
            }
        }
    }

    #[test]
    fn exp_bound_with_zero_based_rank() {
        // with the exponent counted from the head token the constant 2 covers
        // every size and tau
        for tau in [0.1, 0.5, 1.0, 2.0] {
            for size in [10, 100, 1000] {
                let c = check_exp_tail_bound(size, tau, 2.0, 1.0).unwrap();
                assert!(c.holds(), "{c:?}");
            }
        }
    }
}
