use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use serde::Serialize;

use super::config::{ExperimentConfig, ModelKind, TailShape};
use super::train::{run_experiment, sample_examples, synthetic_joint, tail_distribution, version_string};
use crate::data::{self, parse_tokens_csv, TokenRow};
use crate::error::{Error, Result};
use crate::optim::OptimizerKind;
use crate::rng::{RunRng, Stream};
use crate::theory::{
    block_smoothness, check_poly_tail_bound, check_unbiasedness, improvement_ratios,
    improvement_ratios_from_probs, kendall_tau, moment_frequency_correlation, random_instance,
    variance_report, KendallTau, VarianceReport,
};
use crate::token_space::{Cell, JointDistribution, Label, TokenDistribution};

/// Writes the joint, both marginals and, when `samples > 0`, a ratings file
/// in MovieLens format (rating 5 for positive pairs, 1 for negative).
pub fn gen_data(cfg: &ExperimentConfig, out: &Path) -> Result<JointDistribution> {
    let joint = synthetic_joint(cfg)?;
    fs::create_dir_all(out).map_err(|e| Error::io(out, e))?;
    data::write_file(&out.join("joint.csv"), &joint.to_csv())?;
    data::write_file(&out.join("users.csv"), &joint.user_marginal()?.to_csv())?;
    data::write_file(&out.join("items.csv"), &joint.item_marginal()?.to_csv())?;
    if cfg.data.samples > 0 {
        let mut text = String::new();
        for (t, e) in sample_examples(&joint, cfg.data.samples, cfg.train.seed).iter().enumerate() {
            let rating = if e.label == Label::Pos { 5 } else { 1 };
            let _ = writeln!(text, "{}::{}::{}::{}", e.tokens[0], e.tokens[1] - joint.n_users(), rating, t);
        }
        data::write_file(&out.join("ratings.dat"), &text)?;
    }
    Ok(joint)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CheckResult {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct InstanceReport {
    pub index: usize,
    pub n_users: usize,
    pub n_items: usize,
    pub dim: usize,
    pub max_deviation: f64,
    #[serde(flatten)]
    pub variance: VarianceReport,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct VerifyReport {
    pub version: String,
    pub seed: u64,
    pub instances: Vec<InstanceReport>,
    /// Improvement ratios for instance 0, with its pointwise sigma^2.
    pub gamma: Vec<f64>,
    /// Accumulator/count correlation from a short Adagrad run.
    pub pearson_r: f64,
    pub checks: Vec<CheckResult>,
}

impl VerifyReport {
    pub fn all_passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }

    pub fn table(&self) -> String {
        let width = self.checks.iter().map(|c| c.name.len()).max().unwrap_or(0);
        let mut out = String::new();
        for c in &self.checks {
            let mark = if c.passed { "PASS" } else { "FAIL" };
            let _ = writeln!(out, "{mark}  {:width$}  {}", c.name, c.detail);
        }
        out
    }
}

fn check(name: &str, passed: bool, detail: String) -> CheckResult {
    CheckResult {
        name: name.into(),
        passed,
        detail,
    }
}

/// One user per item: every conditional gradient is deterministic.
fn matching_instance(seed: u64, n: usize) -> Result<(crate::model::EmbeddingTable, JointDistribution)> {
    use rand::Rng;
    let rng = RunRng::new(seed);
    let mut r = rng.substream(Stream::Planted, 1000);
    let raw: Vec<f64> = (0..n).map(|_| r.gen_range(0.1..1.0)).collect();
    let total: f64 = raw.iter().sum();
    let cells = (0..n)
        .map(|u| Cell {
            user: u,
            item: (u + 1) % n,
            mass: raw[u] / total,
            label: if r.gen_bool(0.5) { Label::Pos } else { Label::Neg },
        })
        .collect();
    let joint = JointDistribution::from_cells(n, n, cells)?;
    let theta = crate::model::EmbeddingTable::init_uniform(n, n, 3, &mut rng.substream(Stream::Init, 1000));
    Ok((theta, joint))
}

/// Exact-oracle suite on 20 generated instances plus the distribution-level
/// checks. Writes `report.json` into `out` when given.
pub fn verify(seed: u64, out: Option<&Path>) -> Result<VerifyReport> {
    let rng = RunRng::new(seed);
    let mut instances = Vec::new();
    let mut gamma = Vec::new();
    for index in 0..20 {
        let mut r = rng.substream(Stream::Planted, index as u32);
        let (theta, joint) = random_instance(&mut r, 8, 4)?;
        let variance = variance_report(&theta, &joint)?;
        if index == 0 {
            gamma = improvement_ratios(&joint.user_marginal()?, &joint.item_marginal()?, &variance.per_token_sigma2)?;
        }
        instances.push(InstanceReport {
            index,
            n_users: joint.n_users(),
            n_items: joint.n_items(),
            dim: theta.dim(),
            max_deviation: check_unbiasedness(&theta, &joint)?,
            variance,
        });
    }

    let mut checks = Vec::new();
    let worst_dev = instances.iter().map(|i| i.max_deviation).fold(0.0, f64::max);
    checks.push(check("unbiasedness", worst_dev < 1e-10, format!("max deviation {worst_dev:.3e}")));
    let worst_lower = instances.iter().map(|i| i.variance.lower_slack()).fold(f64::INFINITY, f64::min);
    let worst_upper = instances.iter().map(|i| i.variance.upper_slack()).fold(f64::INFINITY, f64::min);
    checks.push(check(
        "variance sandwich",
        worst_lower >= -1e-12 && worst_upper >= -1e-12,
        format!("min slack lower {worst_lower:.3e}, upper {worst_upper:.3e}"),
    ));

    let (theta, joint) = matching_instance(seed, 6)?;
    let m = variance_report(&theta, &joint)?;
    let gap = (m.exact_variance - m.lower_bound).abs();
    checks.push(check("deterministic conditionals", gap < 1e-10, format!("|exact - lower| {gap:.3e}")));

    let d = TokenDistribution::poly_tail(10, 2.0)?;
    let total: f64 = (1..=10).map(|k| block_smoothness(1.5, &d, k)).sum::<Result<f64>>()?;
    checks.push(check(
        "block smoothness sums to 2L",
        (total - 3.0).abs() < 1e-12,
        format!("sum {total:.15}"),
    ));

    let u = TokenDistribution::uniform(7)?;
    let g = improvement_ratios(&u, &u, &[1.0; 14])?;
    let dev = g.iter().map(|x| (x - 1.0).abs()).fold(0.0, f64::max);
    checks.push(check("uniform improvement ratio", dev < 1e-12, format!("max |gamma - 1| {dev:.3e}")));

    let mut poly_ok = true;
    let mut worst = f64::NEG_INFINITY;
    for nu in [2.0, 3.0, 4.0] {
        for size in [10, 100, 1000] {
            let c = check_poly_tail_bound(size, nu)?;
            poly_ok &= c.holds();
            worst = worst.max(c.max_log_excess);
        }
    }
    checks.push(check("polynomial tail bound", poly_ok, format!("max log excess {worst:.4}")));

    let pearson_r = correlation_run(seed)?;
    checks.push(check("moment-frequency correlation", pearson_r >= 0.9, format!("r = {pearson_r:.4}")));

    let report = VerifyReport {
        version: version_string(),
        seed,
        instances,
        gamma,
        pearson_r,
        checks,
    };
    if let Some(out) = out {
        fs::create_dir_all(out).map_err(|e| Error::io(out, e))?;
        data::write_file(&out.join("report.json"), &(serde_json::to_string_pretty(&report)? + "\n"))?;
    }
    Ok(report)
}

/// Configuration for the one-epoch Adagrad correlation run on a
/// polynomial-tail FM dataset. The rate is small enough that the planted
/// labels are not yet fit within the epoch.
pub fn correlation_config(seed: u64, tokens: usize, samples: usize) -> ExperimentConfig {
    let mut cfg = ExperimentConfig::default();
    cfg.data.tail = TailShape::Poly;
    cfg.data.nu = 2.0;
    cfg.data.users = tokens;
    cfg.data.items = tokens;
    cfg.data.samples = samples;
    cfg.model.kind = ModelKind::Fm;
    cfg.model.dim = 8;
    cfg.opt.kind = OptimizerKind::Adagrad;
    cfg.opt.alpha = 1e-3;
    cfg.opt.batch = 1;
    cfg.train.epochs = 1;
    cfg.train.seed = seed;
    cfg
}

fn correlation_run(seed: u64) -> Result<f64> {
    let out = run_experiment(&correlation_config(seed, 200, 20_000))?;
    moment_frequency_correlation(&out.accumulator_sums, &out.token_counts)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SideRankCorrelation {
    pub users: Option<KendallTau>,
    pub items: Option<KendallTau>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AnalyzeReport {
    /// Accumulator/count correlation; `None` unless the run used an adaptive
    /// optimizer.
    pub pearson_r: Option<f64>,
    /// Equal-variance improvement ratio per stacked token from the training
    /// frequencies.
    pub gamma: Vec<f64>,
    /// Kendall correlation between frequency rank and final `|grad f_k|^2`.
    pub rank_gradnorm: SideRankCorrelation,
}

/// Correlation and speedup summaries from a finished `train` directory.
pub fn analyze(run_dir: &Path, out: Option<&Path>) -> Result<AnalyzeReport> {
    let tokens_path = run_dir.join("tokens.csv");
    let text = fs::read_to_string(&tokens_path).map_err(|e| Error::io(&tokens_path, e))?;
    let tokens = parse_tokens_csv(&text)?;
    if tokens.is_empty() {
        return Err(Error::InvalidInput(format!("{} has no rows", tokens_path.display())));
    }
    let manifest_path = run_dir.join("manifest.json");
    let manifest: serde_json::Value = serde_json::from_str(
        &fs::read_to_string(&manifest_path).map_err(|e| Error::io(&manifest_path, e))?,
    )?;
    let n_users = manifest["n_users"]
        .as_u64()
        .ok_or_else(|| Error::InvalidInput("manifest lacks n_users".into()))? as usize;

    let acc: Vec<f64> = tokens.iter().map(|t| t.accumulator_sum).collect();
    let p: Vec<f64> = tokens.iter().map(|t| t.p_hat).collect();
    let pearson_r = if acc.iter().any(|&a| a != 0.0) {
        crate::numeric::pearson(&acc, &p)
    } else {
        None
    };
    let gamma = improvement_ratios_from_probs(&p, &vec![1.0; p.len()])?;

    let side = |rows: &[TokenRow]| -> Option<KendallTau> {
        let ranks: Vec<f64> = rows.iter().map(|t| t.rank as f64).collect();
        let norms: Vec<f64> = rows.iter().map(|t| t.grad_norm_sq).collect();
        kendall_tau(&ranks, &norms).ok()
    };
    let split = n_users.min(tokens.len());
    let report = AnalyzeReport {
        pearson_r,
        gamma,
        rank_gradnorm: SideRankCorrelation {
            users: side(&tokens[..split]),
            items: side(&tokens[split..]),
        },
    };
    let out = out.unwrap_or(run_dir);
    fs::create_dir_all(out).map_err(|e| Error::io(out, e))?;
    data::write_file(&out.join("report.json"), &(serde_json::to_string_pretty(&report)? + "\n"))?;
    Ok(report)
}

/// Marginal of a generated side, for callers checking `gen-data` output.
pub fn expected_marginal(cfg: &ExperimentConfig, users: bool) -> Result<TokenDistribution> {
    let size = if users { cfg.data.users } else { cfg.data.items };
    tail_distribution(cfg.data.tail, size, cfg.data.tau, cfg.data.nu)
}
