use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::token_space::TokenCounter;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum OptimizerKind {
    /// Plain SGD with one constant rate `alpha` for every row.
    SgdConstant,
    /// Per-token rate from known frequencies.
    FaFrequency,
    /// Per-token rate from online occurrence counts.
    CfCounter,
    Adagrad,
    Adam,
}

impl OptimizerKind {
    pub fn as_str(self) -> &'static str {
        match self {
            OptimizerKind::SgdConstant => "sgd-constant",
            OptimizerKind::FaFrequency => "fa-frequency",
            OptimizerKind::CfCounter => "cf-counter",
            OptimizerKind::Adagrad => "adagrad",
            OptimizerKind::Adam => "adam",
        }
    }
}

impl fmt::Display for OptimizerKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for OptimizerKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Ok(match s {
            "sgd" | "sgd-constant" => OptimizerKind::SgdConstant,
            "fa" | "fa-sgd" | "fa-frequency" => OptimizerKind::FaFrequency,
            "cf" | "cf-sgd" | "cf-counter" => OptimizerKind::CfCounter,
            "adagrad" => OptimizerKind::Adagrad,
            "adam" => OptimizerKind::Adam,
            other => return Err(Error::invalid(format!("unknown optimizer kind `{other}`"))),
        })
    }
}

/// Full description of an update rule.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScheduleSpec {
    pub kind: OptimizerKind,
    /// Base step scale.
    pub alpha: f64,
    /// Smoothness constant; the frequency-aware rates are capped at `1/(4L)`.
    pub smoothness: f64,
    /// Total number of steps, fixed before the run starts.
    pub horizon: u64,
    pub eps: f64,
    pub beta1: f64,
    pub beta2: f64,
    /// Rows are projected back onto this ball after each update when set.
    pub project_radius: Option<f64>,
}

impl ScheduleSpec {
    pub fn new(kind: OptimizerKind, alpha: f64, smoothness: f64, horizon: u64) -> Self {
        Self {
            kind,
            alpha,
            smoothness,
            horizon,
            eps: 1e-10,
            beta1: 0.9,
            beta2: 0.999,
            project_radius: None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.alpha > 0.0 && self.alpha.is_finite()) {
            return Err(Error::invalid(format!("alpha must be positive, got {}", self.alpha)));
        }
        if !(self.smoothness > 0.0 && self.smoothness.is_finite()) {
            return Err(Error::invalid(format!("L must be positive, got {}", self.smoothness)));
        }
        if self.horizon == 0 {
            return Err(Error::invalid("T must be at least 1"));
        }
        if !(self.eps > 0.0) {
            return Err(Error::invalid(format!("eps must be positive, got {}", self.eps)));
        }
        for (name, b) in [("beta1", self.beta1), ("beta2", self.beta2)] {
            if !(0.0..1.0).contains(&b) {
                return Err(Error::invalid(format!("{name} must be in [0, 1), got {b}")));
            }
        }
        if let Some(r) = self.project_radius {
            if !(r > 0.0) {
                return Err(Error::invalid(format!("projection radius must be positive, got {r}")));
            }
        }
        Ok(())
    }

    /// `1 / (4L)`.
    pub fn cap(&self) -> f64 {
        1.0 / (4.0 * self.smoothness)
    }

    /// `min(1/(4L), alpha / sqrt(T p))`, shared by the frequency-aware rules.
    fn frequency_rate(&self, p: f64) -> f64 {
        self.cap().min(self.alpha / (self.horizon as f64 * p).sqrt())
    }
}

/// Frequency-aware rate `min(1/(4L), alpha / sqrt(T p_k))`, constant in `t`.
pub fn fa_rate(spec: &ScheduleSpec, p_k: f64) -> Result<f64> {
    if !(p_k > 0.0 && p_k <= 1.0) {
        return Err(Error::invalid(format!("token probability must be in (0, 1], got {p_k}")));
    }
    Ok(spec.frequency_rate(p_k))
}

/// Counter-based rate `min(1/(4L), alpha / sqrt(T c_k / t))`.
///
/// Before a token has been seen (`t = 0` or `c_k = 0`) the second branch is
/// unbounded and the rate is the cap.
pub fn cf_rate(spec: &ScheduleSpec, counter: &TokenCounter, token: usize) -> f64 {
    let c = counter.count(token);
    if counter.total() == 0 || c == 0 {
        return spec.cap();
    }
    spec.frequency_rate(c as f64 / counter.total() as f64)
}

/// `sqrt((f(Theta^0) - f*) / (L * weighted_sigma2))`.
///
/// With `weighted_sigma2 = sum_l p_l sigma_l^2` this is the frequency-aware
/// choice; with `sum_l p_l^2 sigma_l^2` it is the plain-SGD one.
pub fn theoretical_alpha(f0_minus_fstar: f64, smoothness: f64, weighted_sigma2: f64) -> Result<f64> {
    for (name, x) in [
        ("f0 - f*", f0_minus_fstar),
        ("L", smoothness),
        ("weighted sigma^2", weighted_sigma2),
    ] {
        if !(x > 0.0 && x.is_finite()) {
            return Err(Error::invalid(format!("{name} must be positive, got {x}")));
        }
    }
    Ok((f0_minus_fstar / (smoothness * weighted_sigma2)).sqrt())
}

/// Plain-SGD theory rate `min(1/(4L), alpha / sqrt(T))`, used as the
/// constant of an `sgd-constant` schedule.
pub fn sgd_theory_rate(alpha: f64, smoothness: f64, horizon: u64) -> f64 {
    (1.0 / (4.0 * smoothness)).min(alpha / (horizon as f64).sqrt())
}
