use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};

use crate::error::{Error, Result};
use crate::numeric::pearson;

/// Pearson correlation between per-row accumulator sums and token counts.
pub fn moment_frequency_correlation(accumulator: &[f64], counts: &[u64]) -> Result<f64> {
    if accumulator.len() != counts.len() {
        return Err(Error::invalid(format!(
            "{} accumulator rows for {} counts",
            accumulator.len(),
            counts.len()
        )));
    }
    let c: Vec<f64> = counts.iter().map(|&c| c as f64).collect();
    pearson(accumulator, &c).ok_or_else(|| {
        Error::DegenerateInput("accumulator or counts have zero variance".into())
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KendallTau {
    /// Tau-b, tie-corrected.
    pub tau: f64,
    /// Two-sided p-value from the normal approximation.
    pub p_value: f64,
}

/// Kendall rank correlation between two equal-length samples.
pub fn kendall_tau(xs: &[f64], ys: &[f64]) -> Result<KendallTau> {
    let n = xs.len();
    if n != ys.len() || n < 3 {
        return Err(Error::invalid(format!(
            "need two samples of equal length >= 3, got {} and {}",
            n,
            ys.len()
        )));
    }
    let (mut concordant, mut discordant) = (0i64, 0i64);
    let (mut ties_x, mut ties_y) = (0i64, 0i64);
    for a in 0..n {
        for b in a + 1..n {
            let dx = xs[a].partial_cmp(&xs[b]).unwrap_or(std::cmp::Ordering::Equal);
            let dy = ys[a].partial_cmp(&ys[b]).unwrap_or(std::cmp::Ordering::Equal);
            use std::cmp::Ordering::Equal;
            match (dx, dy) {
                (Equal, Equal) => {
                    ties_x += 1;
                    ties_y += 1;
                }
                (Equal, _) => ties_x += 1,
                (_, Equal) => ties_y += 1,
                _ if dx == dy => concordant += 1,
                _ => discordant += 1,
            }
        }
    }
    let pairs = (n * (n - 1) / 2) as f64;
    let denom = ((pairs - ties_x as f64) * (pairs - ties_y as f64)).sqrt();
    if denom == 0.0 {
        return Err(Error::DegenerateInput("a sample is constant".into()));
    }
    let s = (concordant - discordant) as f64;
    let tau = s / denom;
    let nf = n as f64;
    let var_s = nf * (nf - 1.0) * (2.0 * nf + 5.0) / 18.0;
    let z = s / var_s.sqrt();
    let normal = Normal::new(0.0, 1.0).expect("standard normal");
    let p_value = (2.0 * normal.sf(z.abs())).min(1.0);
    Ok(KendallTau { tau, p_value })
}
