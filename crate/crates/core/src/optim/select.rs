use rand::Rng;

use crate::error::{Error, Result};

/// Which iterate a run reports.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OutputRule {
    /// Uniform over `{0, ..., T}`.
    Uniform,
    /// Uniform over `{T/2, ..., T}` (integer division).
    UpperHalf,
    Last,
}

pub fn select_output_iterate<R: Rng + ?Sized>(horizon: u64, rule: OutputRule, rng: &mut R) -> Result<u64> {
    if horizon < 2 {
        return Err(Error::invalid(format!("T must be at least 2, got {horizon}")));
    }
    Ok(match rule {
        OutputRule::Uniform => rng.gen_range(0..=horizon),
        OutputRule::UpperHalf => rng.gen_range(horizon / 2..=horizon),
        OutputRule::Last => horizon,
    })
}
