//! Experiment configuration, the training loop, evaluation metrics and the
//! subcommands behind the `freqsgd` binary.

mod commands;
mod config;
mod metrics;
mod train;

pub use commands::{
    analyze, correlation_config, expected_marginal, gen_data, verify, AnalyzeReport, CheckResult,
    InstanceReport, SideRankCorrelation, VerifyReport,
};
pub use config::{
    DataConfig, DataSource, ExperimentConfig, ModelConfig, ModelKind, OptConfig, OutputChoice,
    TailShape, TrainConfig,
};
pub use metrics::{auc, logloss};
pub use train::{
    load_dataset, mean_loss, run_experiment, sample_examples, synthetic_joint, tail_distribution,
    version_string, Dataset, RunOutput,
};
