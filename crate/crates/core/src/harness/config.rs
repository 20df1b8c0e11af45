use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::optim::{OptimizerKind, ScheduleSpec};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DataSource {
    Synthetic,
    Movielens,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TailShape {
    Exp,
    Poly,
    Uniform,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DataConfig {
    pub source: DataSource,
    /// Ratings file for `movielens`.
    pub path: Option<PathBuf>,
    pub tail: TailShape,
    pub tau: f64,
    pub nu: f64,
    pub users: usize,
    pub items: usize,
    /// Number of sampled interactions for `synthetic`.
    pub samples: usize,
    /// Width of the hidden embeddings that label synthetic pairs.
    pub planted_dim: usize,
}

impl Default for DataConfig {
    fn default() -> Self {
        Self {
            source: DataSource::Synthetic,
            path: None,
            tail: TailShape::Poly,
            tau: 0.1,
            nu: 2.0,
            users: 100,
            items: 100,
            samples: 10_000,
            planted_dim: 8,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModelKind {
    Dot,
    Fm,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ModelConfig {
    pub kind: ModelKind,
    pub dim: usize,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            kind: ModelKind::Fm,
            dim: 8,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OptConfig {
    pub kind: OptimizerKind,
    pub alpha: f64,
    #[serde(rename = "L")]
    pub smoothness: f64,
    /// Horizon; `0` means `epochs * ceil(n_train / batch)`.
    #[serde(rename = "T")]
    pub horizon: u64,
    pub eps: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub batch: usize,
    /// `0` disables projection.
    pub project_radius: f64,
}

impl Default for OptConfig {
    fn default() -> Self {
        Self {
            kind: OptimizerKind::SgdConstant,
            alpha: 0.1,
            smoothness: 1.0,
            horizon: 0,
            eps: 1e-10,
            beta1: 0.9,
            beta2: 0.999,
            batch: 1,
            project_radius: 0.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OutputChoice {
    Last,
    /// Random iterate: uniform over all steps for frequency-aware SGD, over
    /// the second half for counter-based SGD, last for everything else.
    Sampled,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    pub epochs: usize,
    pub seed: u64,
    pub patience: usize,
    /// Steps between progress lines on stderr; `0` is silent.
    pub stride: u64,
    pub output: OutputChoice,
    pub out_dir: Option<PathBuf>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 1,
            seed: 0,
            patience: 2,
            stride: 0,
            output: OutputChoice::Last,
            out_dir: None,
        }
    }
}

/// Everything a `train` run depends on.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ExperimentConfig {
    pub data: DataConfig,
    pub model: ModelConfig,
    pub opt: OptConfig,
    pub train: TrainConfig,
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_path(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read `{}`: {e}", path.display())))?;
        Self::from_toml(&text)
            .map_err(|e| Error::Config(format!("{}: {e}", path.display())))
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if self.train.epochs == 0 {
            return bad("train.epochs must be at least 1".into());
        }
        if self.opt.batch == 0 {
            return bad("opt.batch must be at least 1".into());
        }
        if self.model.dim == 0 {
            return bad("model.dim must be at least 1".into());
        }
        if self.opt.project_radius < 0.0 {
            return bad("opt.project_radius must be non-negative".into());
        }
        match self.data.source {
            DataSource::Movielens if self.data.path.is_none() => {
                return bad("data.path is required for movielens".into())
            }
            DataSource::Synthetic if self.data.users == 0 || self.data.items == 0 => {
                return bad("data.users and data.items must be positive".into())
            }
            DataSource::Synthetic if self.data.planted_dim == 0 => {
                return bad("data.planted_dim must be positive".into())
            }
            _ => {}
        }
        // horizon is checked once the split size is known
        let mut spec = self.schedule(1);
        spec.horizon = 1;
        spec.validate().map_err(|e| Error::Config(e.to_string()))
    }

    /// Steps in a full run: `epochs * ceil(n_train / batch)`.
    pub fn planned_steps(&self, n_train: usize) -> u64 {
        (self.train.epochs * n_train.div_ceil(self.opt.batch)) as u64
    }

    pub fn schedule(&self, horizon: u64) -> ScheduleSpec {
        ScheduleSpec {
            kind: self.opt.kind,
            alpha: self.opt.alpha,
            smoothness: self.opt.smoothness,
            horizon,
            eps: self.opt.eps,
            beta1: self.opt.beta1,
            beta2: self.opt.beta2,
            project_radius: (self.opt.project_radius > 0.0).then_some(self.opt.project_radius),
        }
    }
}
