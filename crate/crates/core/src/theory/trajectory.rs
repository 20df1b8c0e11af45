//! Single-sample runs on an enumerable instance with exact gradient-norm
//! snapshots.

use serde::{Deserialize, Serialize};

use super::oracle::variance_report;
use crate::error::Result;
use crate::model::{
    pair_gradient, population_gradient, population_objective, smoothness_bound, EmbeddingTable,
};
use crate::numeric::{compensated_sum, norm_sq};
use crate::optim::{
    sgd_theory_rate, theoretical_alpha, OptimizerKind, OptimizerState, ScheduleSpec,
};
use crate::rng::{RunRng, Stream};
use crate::token_space::{JointDistribution, PairSampler};

/// Squared norm of every row of the exact population gradient at one step.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GradnormSnapshot {
    pub step: u64,
    pub row_norms: Vec<f64>,
}

fn snapshot(step: u64, theta: &EmbeddingTable, joint: &JointDistribution) -> Result<GradnormSnapshot> {
    let g = population_gradient(theta, joint)?;
    Ok(GradnormSnapshot {
        step,
        row_norms: (0..g.n_rows()).map(|k| norm_sq(g.row(k))).collect(),
    })
}

/// Runs `spec.horizon` single-sample steps from `theta0` and records
/// `|grad f_k|^2` at step 0, every `stride` steps, and the final step.
///
/// Pairs come from the `Sampler` stream of `seed`; frequency-aware schedules
/// use the joint's exact token probabilities.
pub fn gradnorm_trajectory(
    joint: &JointDistribution,
    theta0: &EmbeddingTable,
    spec: ScheduleSpec,
    seed: u64,
    stride: u64,
) -> Result<Vec<GradnormSnapshot>> {
    let stride = stride.max(1);
    let mut theta = theta0.clone();
    let probs = joint.token_probs();
    let mut state = OptimizerState::new(
        spec,
        joint.n_users(),
        joint.n_items(),
        theta.dim(),
        Some(&probs),
    )?;
    let sampler = PairSampler::new(joint);
    let mut rng = RunRng::new(seed).stream(Stream::Sampler);
    let mut out = vec![snapshot(0, &theta, joint)?];
    for t in 1..=spec.horizon {
        let (i, j, y) = sampler.sample(&mut rng);
        let g = pair_gradient(&theta, i, j, y);
        state.apply_sparse_step(&mut theta, &g, &[(i, j)])?;
        if t % stride == 0 || t == spec.horizon {
            out.push(snapshot(t, &theta, joint)?);
        }
    }
    Ok(out)
}

/// Matched plain-SGD and frequency-aware schedules for a theory run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TheorySchedules {
    pub smoothness: f64,
    pub alpha_sgd: f64,
    pub alpha_fa: f64,
    pub sgd: ScheduleSpec,
    pub fa: ScheduleSpec,
}

/// Builds both schedules from oracle quantities at `theta0`:
/// `f(theta0) - f_star`, pointwise `sigma_k^2`, and `L = 1 + R^2/4`.
///
/// Plain SGD uses `min(1/(4L), alpha_sgd / sqrt(T))` with
/// `alpha_sgd = sqrt(gap / (L sum p_l^2 sigma_l^2))`; the frequency-aware
/// schedule uses `alpha_fa = sqrt(gap / (L sum p_l sigma_l^2))`.
pub fn theory_schedules(
    joint: &JointDistribution,
    theta0: &EmbeddingTable,
    horizon: u64,
    radius: f64,
    f_star: f64,
    project: bool,
) -> Result<TheorySchedules> {
    let smoothness = smoothness_bound(radius)?;
    let gap = population_objective(theta0, joint)? - f_star;
    let sigma2 = variance_report(theta0, joint)?.per_token_sigma2;
    let p = joint.token_probs();
    let first = compensated_sum(p.iter().zip(&sigma2).map(|(p, s)| p * s));
    let second = compensated_sum(p.iter().zip(&sigma2).map(|(p, s)| p * p * s));
    let alpha_fa = theoretical_alpha(gap, smoothness, first)?;
    let alpha_sgd = theoretical_alpha(gap, smoothness, second)?;
    let radius = project.then_some(radius);
    let mut sgd = ScheduleSpec::new(
        OptimizerKind::SgdConstant,
        sgd_theory_rate(alpha_sgd, smoothness, horizon),
        smoothness,
        horizon,
    );
    sgd.project_radius = radius;
    let mut fa = ScheduleSpec::new(OptimizerKind::FaFrequency, alpha_fa, smoothness, horizon);
    fa.project_radius = radius;
    Ok(TheorySchedules {
        smoothness,
        alpha_sgd,
        alpha_fa,
        sgd,
        fa,
    })
}
