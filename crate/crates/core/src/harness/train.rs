use std::fs;
use std::path::Path;

use rand::seq::SliceRandom;
use serde::Serialize;

use super::config::{DataSource, ExperimentConfig, ModelKind, OutputChoice, TailShape};
use super::metrics::{auc, logloss};
use crate::data::{self, binarize, load_movielens, split, EpochRow, MetricsLog, TokenRow};
use crate::error::{Error, Result};
use crate::model::{fm_grad, fm_predict, EmbeddingTable, Example, FmParams};
use crate::numeric::{norm_sq, KahanSum};
use crate::optim::{select_output_iterate, OptimizerKind, OptimizerState, OutputRule};
use crate::rng::{RunRng, Stream, GENERATOR_NAME};
use crate::token_space::{JointDistribution, Label, PairSampler, PlantedLabels, TokenDistribution};

pub fn version_string() -> String {
    format!("v{}", env!("CARGO_PKG_VERSION"))
}

/// Marginal for one side of a synthetic joint.
pub fn tail_distribution(shape: TailShape, size: usize, tau: f64, nu: f64) -> Result<TokenDistribution> {
    match shape {
        TailShape::Exp => TokenDistribution::exp_tail(size, tau),
        TailShape::Poly => TokenDistribution::poly_tail(size, nu),
        TailShape::Uniform => TokenDistribution::uniform(size),
    }
}

/// Product joint of the configured tails, labelled by planted embeddings
/// drawn from the `Planted` stream.
pub fn synthetic_joint(cfg: &ExperimentConfig) -> Result<JointDistribution> {
    let d = &cfg.data;
    let users = tail_distribution(d.tail, d.users, d.tau, d.nu)?;
    let items = tail_distribution(d.tail, d.items, d.tau, d.nu)?;
    let rng = RunRng::new(cfg.train.seed);
    let planted = PlantedLabels::new(d.users, d.items, d.planted_dim, &mut rng.stream(Stream::Planted));
    Ok(JointDistribution::product(&users, &items, |i, j| planted.label(i, j)))
}

/// Interactions drawn i.i.d. from `joint` on the `Sampler` stream.
pub fn sample_examples(joint: &JointDistribution, n: usize, seed: u64) -> Vec<Example> {
    let sampler = PairSampler::new(joint);
    let mut rng = RunRng::new(seed).stream(Stream::Sampler);
    (0..n)
        .map(|_| {
            let (i, j, y) = sampler.sample(&mut rng);
            Example::pair(i, j, joint.n_users(), y)
        })
        .collect()
}

/// Loaded examples with the sizes of both token sets.
pub struct Dataset {
    pub examples: Vec<Example>,
    pub n_users: usize,
    pub n_items: usize,
}

pub fn load_dataset(cfg: &ExperimentConfig) -> Result<Dataset> {
    match cfg.data.source {
        DataSource::Synthetic => {
            let joint = synthetic_joint(cfg)?;
            Ok(Dataset {
                examples: sample_examples(&joint, cfg.data.samples, cfg.train.seed),
                n_users: joint.n_users(),
                n_items: joint.n_items(),
            })
        }
        DataSource::Movielens => {
            let path = cfg.data.path.as_ref().expect("validated");
            let log = load_movielens(path)?;
            Ok(Dataset {
                examples: binarize(&log),
                n_users: log.n_users(),
                n_items: log.n_items(),
            })
        }
    }
}

/// Dense-slot accumulator for the rows touched by one mini-batch, kept in
/// first-touch order.
struct RowAccumulator {
    width: usize,
    slot: Vec<u32>,
    rows: Vec<usize>,
    values: Vec<f64>,
}

impl RowAccumulator {
    fn new(n_rows: usize, width: usize) -> Self {
        Self {
            width,
            slot: vec![u32::MAX; n_rows],
            rows: Vec::new(),
            values: Vec::new(),
        }
    }

    fn add(&mut self, k: usize, v: &[f64], scale: f64) {
        let s = match self.slot[k] {
            u32::MAX => {
                let s = self.rows.len();
                self.slot[k] = s as u32;
                self.rows.push(k);
                self.values.extend(std::iter::repeat_n(0.0, self.width));
                s
            }
            s => s as usize,
        };
        for (a, x) in self.values[s * self.width..(s + 1) * self.width].iter_mut().zip(v) {
            *a += scale * x;
        }
    }

    fn drain(&mut self) -> impl Iterator<Item = (usize, &[f64])> {
        for &k in &self.rows {
            self.slot[k] = u32::MAX;
        }
        let width = self.width;
        let rows = std::mem::take(&mut self.rows);
        let values = &self.values;
        rows.into_iter()
            .enumerate()
            .map(move |(s, k)| (k, &values[s * width..(s + 1) * width]))
    }

    fn clear(&mut self) {
        self.values.clear();
    }
}

/// Optimizer states for every parameter group of the model.
struct Optimizers {
    embeddings: OptimizerState,
    /// Linear weights and bias; absent for the plain dot model.
    linear: Option<(OptimizerState, OptimizerState)>,
}

#[derive(Debug, Serialize)]
struct Manifest<'a> {
    version: String,
    generator: &'static str,
    seed: u64,
    n_users: usize,
    n_items: usize,
    n_train: usize,
    n_validation: usize,
    n_test: usize,
    horizon: u64,
    steps: u64,
    epochs_run: usize,
    stopped_early: bool,
    output_step: u64,
    config: &'a ExperimentConfig,
}

#[derive(Debug, Serialize)]
struct Diagnostics {
    epoch: usize,
    step: u64,
    batch_loss: f64,
    params_finite: bool,
    recent_losses: Vec<f64>,
}

/// Result of a finished `train` run.
#[derive(Debug, Clone)]
pub struct RunOutput {
    pub log: MetricsLog,
    pub params: FmParams,
    pub horizon: u64,
    pub steps: u64,
    pub stopped_early: bool,
    pub test_auc: f64,
    /// Per-row sums of the embedding second-moment accumulator (adaptive
    /// kinds), empty otherwise.
    pub accumulator_sums: Vec<f64>,
    pub token_counts: Vec<u64>,
}

fn score(params: &FmParams, examples: &[Example]) -> (Vec<f64>, Vec<Label>) {
    examples
        .iter()
        .map(|e| (fm_predict(e, params), e.label))
        .unzip()
}

fn counts(examples: &[Example], n_tokens: usize) -> Vec<u64> {
    let mut c = vec![0u64; n_tokens];
    for e in examples {
        for &k in &e.tokens {
            c[k] += 1;
        }
    }
    c
}

/// 1-based rank by descending count within `range`, ties by index.
fn side_ranks(c: &[u64], range: std::ops::Range<usize>, out: &mut [usize]) {
    let mut idx: Vec<usize> = range.collect();
    idx.sort_by(|&a, &b| c[b].cmp(&c[a]).then(a.cmp(&b)));
    for (r, k) in idx.into_iter().enumerate() {
        out[k] = r + 1;
    }
}

fn full_gradient_norms(params: &FmParams, train: &[Example]) -> Vec<f64> {
    let dim = params.embeddings.dim();
    let n = params.n_tokens();
    let mut acc = vec![KahanSum::new(); n * dim];
    for e in train {
        let g = fm_grad(e, params);
        for (k, row) in g.embedding.rows() {
            for (a, x) in acc[k * dim..(k + 1) * dim].iter_mut().zip(row) {
                a.add(*x);
            }
        }
    }
    let scale = 1.0 / train.len() as f64;
    (0..n)
        .map(|k| {
            let row: Vec<f64> = acc[k * dim..(k + 1) * dim]
                .iter()
                .map(|a| a.value() * scale)
                .collect();
            norm_sq(&row)
        })
        .collect()
}

fn pair_of(e: &Example, n_users: usize) -> (usize, usize) {
    (e.tokens[0], e.tokens[1] - n_users)
}

/// End-to-end seeded run: split, shuffled mini-batch epochs, per-epoch
/// validation AUC with early stopping, and output files when
/// `train.out_dir` is set.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<RunOutput> {
    cfg.validate()?;
    let data = load_dataset(cfg)?;
    let n_users = data.n_users;
    let n_tokens = n_users + data.n_items;
    for e in &data.examples {
        e.validate(n_tokens)?;
        if e.tokens.len() != 2 || e.tokens[0] >= n_users || e.tokens[1] < n_users {
            return Err(Error::InvalidInput("examples must be (user, item) pairs".into()));
        }
    }
    let seed = cfg.train.seed;
    let parts = split(&data.examples, seed)?;
    let (train, validation, test) = (parts.train, parts.validation, parts.test);

    let planned = cfg.planned_steps(train.len());
    let horizon = match cfg.opt.horizon {
        0 => planned,
        t if t < planned => {
            return Err(Error::Config(format!(
                "opt.T = {t} is smaller than the {planned} planned steps"
            )))
        }
        t => t,
    };
    let spec = cfg.schedule(horizon);
    let dim = cfg.model.dim;
    let rng = RunRng::new(seed);

    let token_counts = counts(&train, n_tokens);
    let freqs: Vec<f64> = token_counts
        .iter()
        .map(|&c| {
            // tokens absent from training never receive a gradient
            if c == 0 { 1.0 } else { c as f64 / train.len() as f64 }
        })
        .collect();

    let mut params = FmParams::new(EmbeddingTable::init_uniform(
        n_users,
        data.n_items,
        dim,
        &mut rng.stream(Stream::Init),
    ));
    let fm = cfg.model.kind == ModelKind::Fm;
    let mut opt = Optimizers {
        embeddings: OptimizerState::new(spec, n_users, data.n_items, dim, Some(&freqs))?,
        linear: if fm {
            let mut lin_spec = spec;
            lin_spec.project_radius = None;
            Some((
                OptimizerState::new(lin_spec, n_users, data.n_items, 1, Some(&freqs))?,
                OptimizerState::dense(lin_spec, 1)?,
            ))
        } else {
            None
        },
    };

    let output_step = match (cfg.train.output, cfg.opt.kind) {
        (OutputChoice::Sampled, OptimizerKind::FaFrequency) if horizon >= 2 => {
            select_output_iterate(horizon, OutputRule::Uniform, &mut rng.stream(Stream::OutputIterate))?
        }
        (OutputChoice::Sampled, OptimizerKind::CfCounter) if horizon >= 2 => {
            select_output_iterate(horizon, OutputRule::UpperHalf, &mut rng.stream(Stream::OutputIterate))?
        }
        _ => horizon,
    };
    let mut snapshot = (output_step == 0).then(|| params.clone());

    let mut emb_acc = RowAccumulator::new(n_tokens, dim);
    let mut lin_acc = RowAccumulator::new(n_tokens, 1);
    let mut order: Vec<usize> = (0..train.len()).collect();
    let mut log = MetricsLog::default();
    let mut step = 0u64;
    let (mut best, mut since_best) = (f64::NEG_INFINITY, 0usize);
    let mut stopped_early = false;
    let mut recent = Vec::new();

    for epoch in 1..=cfg.train.epochs {
        order.sort_unstable();
        order.shuffle(&mut rng.substream(Stream::DataShuffle, epoch as u32));
        let mut epoch_loss = KahanSum::new();

        for batch in order.chunks(cfg.opt.batch) {
            let scale = 1.0 / batch.len() as f64;
            let mut batch_loss = KahanSum::new();
            let mut bias_grad = 0.0;
            let mut pairs = Vec::with_capacity(batch.len());
            for &b in batch {
                let e = &train[b];
                let logit = fm_predict(e, &params);
                let loss = crate::numeric::log1p_exp(-e.label.sign() * logit);
                batch_loss.add(loss);
                let g = fm_grad(e, &params);
                for (k, row) in g.embedding.rows() {
                    emb_acc.add(k, row, scale);
                }
                if fm {
                    for &(k, x) in &g.linear {
                        lin_acc.add(k, &[x], scale);
                    }
                    bias_grad += scale * g.bias;
                }
                pairs.push(pair_of(e, n_users));
            }
            let loss = batch_loss.value();
            epoch_loss.add(loss);
            recent.push(loss * scale);
            if recent.len() > 16 {
                recent.remove(0);
            }

            for (k, row) in emb_acc.drain() {
                opt.embeddings.update_row(k, params.embeddings.row_mut(k), row)?;
                if let Some(r) = spec.project_radius {
                    params.embeddings.project_row(k, r);
                }
            }
            emb_acc.clear();
            opt.embeddings.finish_step(&pairs)?;
            if let Some((lin, bias)) = &mut opt.linear {
                for (k, g) in lin_acc.drain() {
                    lin.update_row(k, &mut params.linear[k..k + 1], g)?;
                }
                lin.finish_step(&pairs)?;
                bias.update_row(0, std::slice::from_mut(&mut params.bias), &[bias_grad])?;
                bias.finish_step(&[])?;
            }
            lin_acc.clear();
            step += 1;

            if !loss.is_finite() || !params.is_finite() {
                if let Some(dir) = &cfg.train.out_dir {
                    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
                    let diag = Diagnostics {
                        epoch,
                        step,
                        batch_loss: loss * scale,
                        params_finite: params.is_finite(),
                        recent_losses: recent.clone(),
                    };
                    data::write_file(&dir.join("diagnostics.json"), &serde_json::to_string_pretty(&diag)?)?;
                }
                return Err(Error::NonFinite { epoch, step });
            }
            if step == output_step {
                snapshot = Some(params.clone());
            }
            if cfg.train.stride > 0 && step.is_multiple_of(cfg.train.stride) {
                eprintln!("epoch {epoch} step {step}/{horizon} batch loss {:.6}", loss * scale);
            }
        }

        let (scores, labels) = score(&params, &validation);
        let val_auc = auc(&scores, &labels)?;
        log.epochs.push(EpochRow {
            epoch,
            step,
            train_loss: epoch_loss.value() / train.len() as f64,
            val_auc,
        });
        if val_auc > best {
            best = val_auc;
            since_best = 0;
        } else {
            since_best += 1;
            if cfg.train.patience > 0 && since_best >= cfg.train.patience {
                stopped_early = epoch < cfg.train.epochs;
                break;
            }
        }
    }

    let output = snapshot.unwrap_or_else(|| params.clone());
    let (scores, labels) = score(&output, &test);
    let test_auc = auc(&scores, &labels).unwrap_or(f64::NAN);

    let accumulator_sums: Vec<f64> = if opt.embeddings.second_moment().is_empty() {
        Vec::new()
    } else {
        (0..n_tokens)
            .map(|k| opt.embeddings.second_moment_row(k).iter().sum())
            .collect()
    };
    let grad_norms = full_gradient_norms(&output, &train);
    let mut ranks = vec![0; n_tokens];
    side_ranks(&token_counts, 0..n_users, &mut ranks);
    side_ranks(&token_counts, n_users..n_tokens, &mut ranks);
    log.tokens = (0..n_tokens)
        .map(|k| TokenRow {
            token: k,
            rank: ranks[k],
            p_hat: token_counts[k] as f64 / train.len() as f64,
            grad_norm_sq: grad_norms[k],
            accumulator_sum: accumulator_sums.get(k).copied().unwrap_or(0.0),
        })
        .collect();

    let out = RunOutput {
        log,
        params: output,
        horizon,
        steps: step,
        stopped_early,
        test_auc,
        accumulator_sums,
        token_counts,
    };
    if let Some(dir) = &cfg.train.out_dir {
        let manifest = Manifest {
            version: version_string(),
            generator: GENERATOR_NAME,
            seed,
            n_users,
            n_items: data.n_items,
            n_train: train.len(),
            n_validation: validation.len(),
            n_test: test.len(),
            horizon,
            steps: step,
            epochs_run: out.log.epochs.len(),
            stopped_early,
            output_step: output_step.min(step),
            config: cfg,
        };
        write_outputs(dir, &out, &manifest)?;
    }
    Ok(out)
}

fn write_outputs(dir: &Path, out: &RunOutput, manifest: &Manifest<'_>) -> Result<()> {
    data::export_metrics(&out.log, dir)?;
    data::write_file(&dir.join("manifest.json"), &(serde_json::to_string_pretty(manifest)? + "\n"))?;
    out.params.embeddings.save(&dir.join("embeddings.bin"))
}

/// Mean training loss of `params` over `examples`.
pub fn mean_loss(params: &FmParams, examples: &[Example]) -> Result<f64> {
    let (s, l) = score(params, examples);
    logloss(&s, &l)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small(kind: &str) -> ExperimentConfig {
        ExperimentConfig::from_toml(&format!(
            r#"
            data.users = 3
            data.items = 4
            data.samples = 200
            data.tail = "uniform"
            model.kind = "fm"
            model.dim = 2
            opt.kind = "{kind}"
            opt.alpha = 0.05
            opt.batch = 4
            train.epochs = 1
            train.seed = 5
            "#
        ))
        .unwrap()
    }

    #[test]
    fn smoke_runs_for_every_optimizer() {
        for kind in ["sgd-constant", "fa-frequency", "cf-counter", "adagrad", "adam"] {
            let out = run_experiment(&small(kind)).unwrap();
            assert_eq!(out.log.epochs.len(), 1);
            assert!(out.log.epochs[0].train_loss.is_finite());
            assert_eq!(out.steps, 40);
            assert_eq!(out.log.tokens.len(), 7);
        }
    }

    #[test]
    fn deterministic_outputs() {
        let a = run_experiment(&small("cf-counter")).unwrap();
        let b = run_experiment(&small("cf-counter")).unwrap();
        assert_eq!(a.log.metrics_csv(), b.log.metrics_csv());
        assert_eq!(a.log.tokens_csv(), b.log.tokens_csv());
        assert_eq!(a.params, b.params);
    }

    #[test]
    fn divergence_aborts_with_diagnostics() {
        let mut cfg = small("sgd-constant");
        cfg.opt.alpha = 1e200;
        cfg.opt.batch = 1;
        let dir = tempfile::tempdir().unwrap();
        cfg.train.out_dir = Some(dir.path().to_path_buf());
        let err = run_experiment(&cfg).unwrap_err();
        assert!(matches!(err, Error::NonFinite { .. }), "{err}");
        assert!(dir.path().join("diagnostics.json").exists());
    }

    #[test]
    fn early_stop_waits_for_patience() {
        let mut cfg = small("sgd-constant");
        cfg.opt.alpha = 1e-9;
        cfg.train.epochs = 10;
        cfg.train.patience = 2;
        let out = run_experiment(&cfg).unwrap();
        assert!(out.log.epochs.len() > cfg.train.patience);
    }

    #[test]
    fn accumulator_rows_track_counts() {
        let mut cfg = small("adagrad");
        cfg.data.tail = TailShape::Poly;
        cfg.data.users = 30;
        cfg.data.items = 30;
        cfg.data.samples = 5000;
        cfg.opt.batch = 1;
        let out = run_experiment(&cfg).unwrap();
        assert_eq!(out.accumulator_sums.len(), 60);
        let untouched = out.token_counts.iter().zip(&out.accumulator_sums).filter(|(c, _)| **c == 0);
        for (_, a) in untouched {
            assert_eq!(*a, 0.0);
        }
    }

    #[test]
    fn sampled_output_for_counter_kind() {
        let mut cfg = small("cf-counter");
        cfg.train.output = OutputChoice::Sampled;
        let out = run_experiment(&cfg).unwrap();
        assert!(out.params.is_finite());
    }
}
