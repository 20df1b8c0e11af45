//! Token distributions, synthetic joints and their samplers, and the exact
//! occurrence counters used by counter-based rates.

mod counter;
mod distribution;
mod joint;

pub use counter::TokenCounter;
pub use distribution::TokenDistribution;
pub use joint::{sample_pair, Cell, JointDistribution, Label, PairSampler, PlantedLabels};
