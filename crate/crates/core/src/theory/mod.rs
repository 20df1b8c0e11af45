//! Exact small-instance oracles and diagnostics: unbiasedness of the sparse
//! gradient, the variance sandwich, per-token smoothness, improvement ratios,
//! tail bounds and rank/moment correlations.

mod oracle;
mod speedup;
mod stats;
mod trajectory;

pub use oracle::{check_unbiasedness, random_instance, variance_report, VarianceReport};
pub use speedup::{
    block_smoothness, check_exp_tail_bound, check_poly_tail_bound, exp_asymptotic_constant,
    exp_rank_constant, exp_tail_log_ratios, improvement_ratio, improvement_ratios,
    improvement_ratios_from_probs,
    speedup_report, tail_speedup_bound, SpeedupReport, TailBoundCheck, TailKind, POLY_CONSTANT,
};
pub use stats::{kendall_tau, moment_frequency_correlation, KendallTau};
pub use trajectory::{gradnorm_trajectory, theory_schedules, GradnormSnapshot, TheorySchedules};
