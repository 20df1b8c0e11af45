//! End-to-end acceptance checks. Each test prints one line:
//! `criterion <n>  PASS|FAIL  <name>  <detail>`.
//!
//! Run with `cargo test --test acceptance -- --nocapture --test-threads 1`
//! to see the lines in order.

use std::fs;
use std::path::Path;
use std::process::Command;

use rand::Rng;

use freqsgd::harness::{
    auc, correlation_config, run_experiment, synthetic_joint, DataSource, ExperimentConfig,
    ModelKind, TailShape,
};
use freqsgd::model::{fm_grad, fm_loss, grad_pair, loss_dot, EmbeddingTable, Example, FmParams};
use freqsgd::optim::{cf_rate, fa_rate, OptimizerKind, OptimizerState, ScheduleSpec};
use freqsgd::rng::{RunRng, Stream};
use freqsgd::theory::{
    check_exp_tail_bound, check_poly_tail_bound, check_unbiasedness, exp_asymptotic_constant,
    gradnorm_trajectory, kendall_tau, moment_frequency_correlation, random_instance,
    theory_schedules, variance_report,
};
use freqsgd::model::pair_gradient;
use freqsgd::token_space::{
    Cell, JointDistribution, Label, PairSampler, TokenCounter, TokenDistribution,
};

fn verdict(id: u32, name: &str, passed: bool, detail: impl AsRef<str>) {
    let mark = if passed { "PASS" } else { "FAIL" };
    println!("criterion {id:>2}  {mark}  {name}  {}", detail.as_ref());
    assert!(passed, "criterion {id} ({name}) failed: {}", detail.as_ref());
}

fn label(rng: &mut impl Rng) -> Label {
    if rng.gen_bool(0.5) {
        Label::Pos
    } else {
        Label::Neg
    }
}

/// `|a - n| / max(|a|, |n|)` over whole vectors, with an absolute floor for
/// gradients that vanish.
fn rel_error(analytic: &[f64], numeric: &[f64]) -> f64 {
    let diff: f64 = analytic.iter().zip(numeric).map(|(a, n)| (a - n).powi(2)).sum::<f64>().sqrt();
    let scale = analytic
        .iter()
        .map(|a| a * a)
        .sum::<f64>()
        .sqrt()
        .max(numeric.iter().map(|n| n * n).sum::<f64>().sqrt());
    if scale < 1e-8 {
        diff
    } else {
        diff / scale
    }
}

fn central_difference(x: &mut [f64], k: usize, h: f64, f: impl Fn(&[f64]) -> f64) -> f64 {
    let orig = x[k];
    x[k] = orig + h;
    let up = f(x);
    x[k] = orig - h;
    let down = f(x);
    x[k] = orig;
    (up - down) / (2.0 * h)
}

#[test]
fn c01_gradients_match_finite_differences() {
    let h = 1e-5;
    let mut rng = RunRng::new(101).stream(Stream::Init);
    let mut worst_dot: f64 = 0.0;
    for _ in 0..1000 {
        let d = rng.gen_range(1..=16);
        let mut x: Vec<f64> = (0..2 * d).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let y = label(&mut rng);
        let (gi, gj) = grad_pair(&x[..d], &x[d..], y);
        let analytic: Vec<f64> = gi.into_iter().chain(gj).collect();
        let numeric: Vec<f64> = (0..2 * d)
            .map(|k| central_difference(&mut x, k, h, |v| loss_dot(&v[..d], &v[d..], y)))
            .collect();
        worst_dot = worst_dot.max(rel_error(&analytic, &numeric));
    }

    let mut worst_fm: f64 = 0.0;
    for _ in 0..1000 {
        let n_tokens = rng.gen_range(3..=8);
        let d = rng.gen_range(1..=8);
        let data: Vec<f64> = (0..n_tokens * d).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let table = EmbeddingTable::from_rows(1, n_tokens - 1, d, data).unwrap();
        let mut params = FmParams::new(table);
        params.bias = rng.gen_range(-0.5..0.5);
        for w in &mut params.linear {
            *w = rng.gen_range(-0.5..0.5);
        }
        let active = rng.gen_range(2..=n_tokens.min(4));
        let mut tokens: Vec<usize> = (0..n_tokens).collect();
        for i in 0..active {
            let j = rng.gen_range(i..n_tokens);
            tokens.swap(i, j);
        }
        tokens.truncate(active);
        let example = Example { tokens: tokens.clone(), label: label(&mut rng) };

        // flatten: bias, then linear and factor row of each active token
        let pack = |p: &FmParams| -> Vec<f64> {
            let mut v = vec![p.bias];
            for &k in &tokens {
                v.push(p.linear[k]);
                v.extend_from_slice(p.embeddings.row(k));
            }
            v
        };
        let unpack = |v: &[f64]| -> FmParams {
            let mut p = params.clone();
            p.bias = v[0];
            for (a, &k) in tokens.iter().enumerate() {
                let base = 1 + a * (d + 1);
                p.linear[k] = v[base];
                p.embeddings.row_mut(k).copy_from_slice(&v[base + 1..base + 1 + d]);
            }
            p
        };
        let g = fm_grad(&example, &params);
        let mut analytic = vec![g.bias];
        for &k in &tokens {
            analytic.push(g.linear.iter().find(|(t, _)| *t == k).map_or(0.0, |(_, w)| *w));
            match g.embedding.row(k) {
                Some(r) => analytic.extend_from_slice(r),
                None => analytic.extend(std::iter::repeat_n(0.0, d)),
            }
        }
        let mut x = pack(&params);
        let numeric: Vec<f64> = (0..x.len())
            .map(|k| central_difference(&mut x, k, h, |v| fm_loss(&example, &unpack(v))))
            .collect();
        worst_fm = worst_fm.max(rel_error(&analytic, &numeric));
    }
    verdict(
        1,
        "gradients vs central differences",
        worst_dot < 1e-5 && worst_fm < 1e-5,
        format!("max rel error dot {worst_dot:.2e}, fm {worst_fm:.2e} (< 1e-5)"),
    );
}

fn instances() -> Vec<(EmbeddingTable, JointDistribution)> {
    let rng = RunRng::new(7);
    (0..20)
        .map(|i| random_instance(&mut rng.substream(Stream::Planted, i), 8, 4).unwrap())
        .collect()
}

#[test]
fn c02_unbiasedness() {
    let mut worst: f64 = 0.0;
    for (theta, joint) in instances() {
        assert!(joint.n_users() <= 8 && joint.n_items() <= 8 && theta.dim() <= 4);
        worst = worst.max(check_unbiasedness(&theta, &joint).unwrap());
    }
    verdict(2, "sparse gradient unbiasedness", worst < 1e-10, format!("max deviation {worst:.2e} (< 1e-10)"));
}

#[test]
fn c03_variance_sandwich() {
    let mut worst: f64 = f64::INFINITY;
    for (theta, joint) in instances() {
        let r = variance_report(&theta, &joint).unwrap();
        worst = worst.min(r.lower_slack()).min(r.upper_slack());
    }
    // one item per user
    let n = 6;
    let mut rng = RunRng::new(3).stream(Stream::Planted);
    let raw: Vec<f64> = (0..n).map(|_| rng.gen_range(0.1..1.0)).collect();
    let total: f64 = raw.iter().sum();
    let cells = (0..n)
        .map(|u| Cell { user: u, item: (u + 2) % n, mass: raw[u] / total, label: label(&mut rng) })
        .collect();
    let joint = JointDistribution::from_cells(n, n, cells).unwrap();
    let theta = EmbeddingTable::init_uniform(n, n, 3, &mut RunRng::new(3).stream(Stream::Init));
    let r = variance_report(&theta, &joint).unwrap();
    let gap = (r.exact_variance - r.lower_bound).abs();
    verdict(
        3,
        "variance sandwich",
        worst >= -1e-12 && gap < 1e-10,
        format!("min slack {worst:.2e} (>= -1e-12), matching |exact - lower| {gap:.2e} (< 1e-10)"),
    );
}

#[test]
fn c04_uniform_frequency_aware_equals_sgd() {
    let n = 50;
    let steps = 10_000;
    let u = TokenDistribution::uniform(n).unwrap();
    let planted = EmbeddingTable::init_uniform(n, n, 4, &mut RunRng::new(4).stream(Stream::Planted));
    let joint = JointDistribution::product(&u, &u, |i, j| {
        Label::from_sign(freqsgd::numeric::dot(planted.row(i), planted.row(n + j)))
    });
    let theta0 = EmbeddingTable::init_uniform(n, n, 4, &mut RunRng::new(4).stream(Stream::Init));
    let fa = ScheduleSpec::new(OptimizerKind::FaFrequency, 0.5, 1.0, steps);
    let sgd = ScheduleSpec::new(OptimizerKind::SgdConstant, fa_rate(&fa, 1.0 / n as f64).unwrap(), 1.0, steps);
    let probs = joint.token_probs();
    let mut a = OptimizerState::new(fa, n, n, 4, Some(&probs)).unwrap();
    let mut b = OptimizerState::new(sgd, n, n, 4, None).unwrap();
    let (mut ta, mut tb) = (theta0.clone(), theta0);
    let sampler = PairSampler::new(&joint);
    let mut rng = RunRng::new(4).stream(Stream::Sampler);
    let mut first_mismatch = None;
    for t in 0..steps {
        let (i, j, y) = sampler.sample(&mut rng);
        let (ga, gb) = (pair_gradient(&ta, i, j, y), pair_gradient(&tb, i, j, y));
        a.apply_sparse_step(&mut ta, &ga, &[(i, j)]).unwrap();
        b.apply_sparse_step(&mut tb, &gb, &[(i, j)]).unwrap();
        let same = ta.as_slice().iter().zip(tb.as_slice()).all(|(x, y)| x.to_bits() == y.to_bits());
        if !same && first_mismatch.is_none() {
            first_mismatch = Some(t);
        }
    }
    verdict(
        4,
        "uniform frequency-aware SGD equals SGD",
        first_mismatch.is_none(),
        match first_mismatch {
            None => format!("{steps} steps bit-identical"),
            Some(t) => format!("first mismatch at step {t}"),
        },
    );
}

#[test]
fn c05_tail_bounds() {
    let mut failures = Vec::new();
    for tau in [0.1, 0.5, 1.0, 2.0] {
        for size in [10, 100, 1000] {
            if (size as f64) < 1.0 / tau {
                continue;
            }
            let c = check_exp_tail_bound(size, tau, exp_asymptotic_constant(), 0.0).unwrap();
            if !c.holds() {
                failures.push(format!(
                    "exp tau={tau} size={size}: lhs/bound {:.3} at rank {}",
                    c.max_log_excess.exp(),
                    c.worst_rank
                ));
            }
        }
    }
    for nu in [2.0, 3.0, 4.0] {
        for size in [10, 100, 1000] {
            let c = check_poly_tail_bound(size, nu).unwrap();
            if !c.holds() {
                failures.push(format!("poly nu={nu} size={size} rank {}", c.worst_rank));
            }
        }
    }
    verdict(
        5,
        "exponential and polynomial tail bounds",
        failures.is_empty(),
        if failures.is_empty() { "all grid points hold".into() } else { failures.join("; ") },
    );
}

#[test]
fn c06_tail_speedup() {
    let n = 100;
    let horizon = 200_000;
    let seeds: Vec<u64> = (0..20).collect();
    let runs: Vec<(Vec<f64>, Vec<f64>)> = std::thread::scope(|s| {
        let handles: Vec<_> = seeds
            .iter()
            .map(|&seed| {
                s.spawn(move || {
                    let mut cfg = ExperimentConfig::default();
                    cfg.data.tail = TailShape::Poly;
                    cfg.data.nu = 2.0;
                    cfg.data.users = n;
                    cfg.data.items = n;
                    cfg.data.planted_dim = 8;
                    cfg.train.seed = seed;
                    let joint = synthetic_joint(&cfg).unwrap();
                    let theta0 =
                        EmbeddingTable::init_uniform(n, n, 8, &mut RunRng::new(seed).stream(Stream::Init));
                    let sched = theory_schedules(&joint, &theta0, horizon, 1.0, 0.0, false).unwrap();
                    let last = |spec| {
                        gradnorm_trajectory(&joint, &theta0, spec, seed, horizon)
                            .unwrap()
                            .pop()
                            .unwrap()
                            .row_norms
                    };
                    (last(sched.sgd), last(sched.fa))
                })
            })
            .collect();
        handles.into_iter().map(|h| h.join().unwrap()).collect()
    });
    let mean = |second: bool| -> Vec<f64> {
        let mut acc = vec![0.0; 2 * n];
        for r in &runs {
            for (a, x) in acc.iter_mut().zip(if second { &r.1 } else { &r.0 }) {
                *a += x / runs.len() as f64;
            }
        }
        acc
    };
    let sgd = mean(false);
    let fa = mean(true);
    let top = TokenDistribution::poly_tail(n, 2.0).unwrap().top_set(16.0).unwrap().len();

    let mut violations = 0;
    let mut details = Vec::new();
    let mut significant = true;
    for (side, offset) in [("users", 0), ("items", n)] {
        let ranks: Vec<f64> = (top + 1..=n).map(|r| r as f64).collect();
        let ratio: Vec<f64> = (top..n).map(|i| sgd[offset + i] / fa[offset + i]).collect();
        violations += (top..n).filter(|&i| fa[offset + i] > sgd[offset + i]).count();
        let kt = kendall_tau(&ranks, &ratio).unwrap();
        significant &= kt.tau > 0.0 && kt.p_value < 0.05;
        details.push(format!("{side} tau {:.3} p {:.1e}", kt.tau, kt.p_value));
    }
    verdict(
        6,
        "tail speedup direction",
        violations == 0 && significant,
        format!("|U_T| = {top}, FA > SGD on {violations} tail tokens, {}", details.join(", ")),
    );
}

const STREAM_LEN: usize = 100_000;

/// Counters after streaming `STREAM_LEN` pairs from the exp_tail(50, 0.2)
/// product joint.
fn streamed_counter(seed: u64) -> (JointDistribution, TokenCounter) {
    let d = TokenDistribution::exp_tail(50, 0.2).unwrap();
    let joint = JointDistribution::product(&d, &d, |_, _| Label::Pos);
    let sampler = PairSampler::new(&joint);
    let mut rng = RunRng::new(seed).stream(Stream::Sampler);
    let mut counter = TokenCounter::new(50, 50);
    for _ in 0..STREAM_LEN {
        let (i, j, _) = sampler.sample(&mut rng);
        counter.record_pair(i, j).unwrap();
    }
    (joint, counter)
}

#[test]
fn c07_counter_frequency_estimates() {
    let mut good = 0;
    for seed in 0..20 {
        let (joint, counter) = streamed_counter(seed);
        let ok = joint
            .token_probs()
            .iter()
            .enumerate()
            .filter(|(_, &p)| p >= 1e-3)
            .all(|(k, &p)| (counter.p_hat(k) - p).abs() <= p / 2.0);
        good += ok as usize;
    }
    verdict(7, "counter frequency estimates", good >= 18, format!("{good}/20 seeds within p/2 (>= 18)"));
}

#[test]
fn c08_counter_rate_matches_known_rate() {
    let spec = ScheduleSpec::new(OptimizerKind::FaFrequency, 1.0, 1.0, STREAM_LEN as u64);
    let mut good = 0;
    let mut worst: f64 = 0.0;
    for seed in 0..20 {
        let (joint, counter) = streamed_counter(seed);
        let mut seed_worst: f64 = 0.0;
        for (k, &p) in joint.token_probs().iter().enumerate() {
            if p < 1e-3 {
                continue;
            }
            let known = fa_rate(&spec, p).unwrap();
            let counted = cf_rate(&spec, &counter, k);
            seed_worst = seed_worst.max((counted - known).abs() / known);
        }
        worst = worst.max(seed_worst);
        good += (seed_worst <= 0.02) as usize;
    }
    verdict(
        8,
        "counter rate within 2% of known-frequency rate",
        good >= 18,
        format!("{good}/20 seeds with every token within 2% (>= 18), worst relative gap {worst:.3}"),
    );
}

#[test]
fn c09_moment_frequency_correlation() {
    let out = run_experiment(&correlation_config(0, 1000, 100_000)).unwrap();
    let r = moment_frequency_correlation(&out.accumulator_sums, &out.token_counts).unwrap();
    verdict(9, "adagrad accumulator vs token count", r >= 0.9, format!("pearson r {r:.4} (>= 0.9)"));
}

const ML1M_ENV: &str = "FQSGD_ML1M";

#[test]
fn c10_movielens_notice() {
    if std::env::var_os(ML1M_ENV).is_none() {
        println!("criterion 10  NOT RUN  movielens-1m end to end  set {ML1M_ENV}=<ratings.dat> and run with --ignored");
    }
}

#[test]
#[ignore = "needs the MovieLens-1M ratings file at $FQSGD_ML1M"]
fn c10_movielens_end_to_end() {
    let path = std::env::var_os(ML1M_ENV).expect("FQSGD_ML1M must point at ratings.dat");
    let mut peaks = Vec::new();
    let mut epochs_to_080 = Vec::new();
    for (kind, alpha) in [
        (OptimizerKind::SgdConstant, 1e1),
        (OptimizerKind::CfCounter, 1e0),
        (OptimizerKind::Adagrad, 2e-2),
        (OptimizerKind::Adam, 1e-3),
    ] {
        let mut cfg = ExperimentConfig::default();
        cfg.data.source = DataSource::Movielens;
        cfg.data.path = Some(path.clone().into());
        cfg.model.kind = ModelKind::Fm;
        cfg.model.dim = 64;
        cfg.opt.kind = kind;
        cfg.opt.alpha = alpha;
        cfg.opt.batch = 1024;
        cfg.train.epochs = 50;
        cfg.train.patience = 2;
        let out = run_experiment(&cfg).unwrap();
        let peak = out.log.epochs.iter().map(|e| e.val_auc).fold(f64::NEG_INFINITY, f64::max);
        let reach = out.log.epochs.iter().find(|e| e.val_auc >= 0.80).map(|e| e.epoch);
        peaks.push((kind, peak));
        epochs_to_080.push((kind, reach));
    }
    let in_band = peaks.iter().all(|(_, p)| (0.80 - 0.01..=0.82 + 0.01).contains(p));
    let sgd = epochs_to_080[0].1;
    let cf = epochs_to_080[1].1;
    let faster = matches!((cf, sgd), (Some(c), Some(s)) if c <= s) || matches!((cf, sgd), (Some(_), None));
    verdict(
        10,
        "movielens-1m end to end",
        in_band && faster,
        format!("peak val AUC {peaks:?}, epochs to 0.80 {epochs_to_080:?}"),
    );
}

fn brute_force_auc(scores: &[f64], labels: &[Label]) -> f64 {
    let (mut twice_wins, mut pairs) = (0u64, 0u64);
    for (s, l) in scores.iter().zip(labels) {
        if *l != Label::Pos {
            continue;
        }
        for (t, m) in scores.iter().zip(labels) {
            if *m != Label::Neg {
                continue;
            }
            pairs += 1;
            twice_wins += if s > t { 2 } else if s == t { 1 } else { 0 };
        }
    }
    twice_wins as f64 / (2 * pairs) as f64
}

#[test]
fn c11_auc_matches_pair_counting() {
    let mut rng = RunRng::new(11).stream(Stream::Sampler);
    let mut mismatches = 0;
    let mut checked = 0;
    while checked < 1000 {
        let n = rng.gen_range(2..200);
        // coarse scores force ties
        let levels = rng.gen_range(1..20);
        let scores: Vec<f64> = (0..n).map(|_| rng.gen_range(0..levels) as f64 * 0.37).collect();
        let labels: Vec<Label> = (0..n).map(|_| label(&mut rng)).collect();
        if !labels.contains(&Label::Pos) || !labels.contains(&Label::Neg) {
            continue;
        }
        checked += 1;
        if auc(&scores, &labels).unwrap() != brute_force_auc(&scores, &labels) {
            mismatches += 1;
        }
    }
    verdict(11, "rank AUC equals pair counting", mismatches == 0, format!("{mismatches}/1000 instances differ"));
}

fn run_cli(args: &[&str]) {
    let status = Command::new(env!("CARGO_BIN_EXE_freqsgd"))
        .args(args)
        .output()
        .expect("binary runs");
    assert!(status.status.success(), "{args:?}: {}", String::from_utf8_lossy(&status.stderr));
}

fn snapshot_dir(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut files: Vec<(String, Vec<u8>)> = fs::read_dir(dir)
        .unwrap()
        .map(|e| {
            let e = e.unwrap();
            (e.file_name().to_string_lossy().into_owned(), fs::read(e.path()).unwrap())
        })
        .collect();
    files.sort();
    files
}

#[test]
fn c12_repeated_runs_are_byte_identical() {
    let tmp = tempfile::tempdir().unwrap();
    let config = tmp.path().join("run.toml");
    fs::write(
        &config,
        "[data]\ntail = \"poly\"\nusers = 40\nitems = 30\nsamples = 4000\n\n\
         [model]\nkind = \"fm\"\ndim = 4\n\n\
         [opt]\nkind = \"cf-counter\"\nalpha = 0.5\nbatch = 16\n\n\
         [train]\nepochs = 3\nseed = 5\n",
    )
    .unwrap();
    let train_dir = tmp.path().join("train");
    let verify_dir = tmp.path().join("verify");
    let train_args = ["train", "--config", config.to_str().unwrap(), "--out", train_dir.to_str().unwrap()];
    let verify_args = ["verify", "--seed", "5", "--out", verify_dir.to_str().unwrap()];

    run_cli(&train_args);
    run_cli(&verify_args);
    let first = (snapshot_dir(&train_dir), snapshot_dir(&verify_dir));
    run_cli(&train_args);
    run_cli(&verify_args);
    let second = (snapshot_dir(&train_dir), snapshot_dir(&verify_dir));

    let names: Vec<&str> = first.0.iter().chain(&first.1).map(|(n, _)| n.as_str()).collect();
    verdict(
        12,
        "repeated train and verify are byte-identical",
        first == second && first.0.len() == 4 && first.1.len() == 1,
        format!("files {names:?}"),
    );
}
