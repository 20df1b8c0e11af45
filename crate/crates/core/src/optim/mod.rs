//! Sparse update rules: constant SGD, frequency-aware and counter-based
//! per-token rates, and the sparse Adagrad/Adam baselines.

mod schedule;
mod select;
mod state;

pub use schedule::{
    cf_rate, fa_rate, sgd_theory_rate, theoretical_alpha, OptimizerKind, ScheduleSpec,
};
pub use select::{select_output_iterate, OutputRule};
pub use state::OptimizerState;
