use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn freqsgd(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_freqsgd"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn missing_config_is_a_usage_error_naming_the_file() {
    let out = freqsgd(&["train", "--config", "missing.toml"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("missing.toml"));
}

#[test]
fn unknown_flag_and_bad_config_exit_one() {
    assert_eq!(freqsgd(&["train", "--bogus"]).status.code(), Some(1));
    assert_eq!(freqsgd(&["frobnicate"]).status.code(), Some(1));

    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("bad.toml");
    fs::write(&cfg, "[opt]\nalhpa = 0.1\n").unwrap();
    let out = freqsgd(&["train", "--config", s(&cfg)]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("bad.toml"));
}

#[test]
fn runtime_failure_exits_two() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("ml.toml");
    fs::write(
        &cfg,
        format!(
            "data.source = \"movielens\"\ndata.path = \"{}\"\n",
            s(&dir.path().join("absent.dat"))
        ),
    )
    .unwrap();
    assert_eq!(freqsgd(&["train", "--config", s(&cfg)]).status.code(), Some(2));
    assert_eq!(freqsgd(&["analyze", "--run", s(dir.path())]).status.code(), Some(2));
}

#[test]
fn generated_ratings_train_and_analyze() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("data");
    let out = freqsgd(&[
        "gen-data", "--tail", "exp", "--tau", "0.1", "--users", "30", "--items", "20",
        "--samples", "3000", "--seed", "9", "--out", s(&data),
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    for f in ["joint.csv", "users.csv", "items.csv", "ratings.dat"] {
        assert!(data.join(f).exists(), "{f}");
    }

    let cfg = dir.path().join("ml.toml");
    fs::write(
        &cfg,
        format!(
            "[data]\nsource = \"movielens\"\npath = \"{}\"\n\n[model]\nkind = \"fm\"\ndim = 4\n\n\
             [opt]\nkind = \"adagrad\"\nalpha = 0.05\nbatch = 32\n\n[train]\nepochs = 2\n",
            s(&data.join("ratings.dat"))
        ),
    )
    .unwrap();
    let run = dir.path().join("run");
    let out = freqsgd(&["train", "--config", s(&cfg), "--seed", "2", "--out", s(&run)]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(String::from_utf8_lossy(&out.stdout).contains("test_auc"));

    let metrics = fs::read_to_string(run.join("metrics.csv")).unwrap();
    assert!(metrics.starts_with("epoch,step,train_loss,val_auc\n"));
    assert_eq!(metrics.lines().count(), 3);
    let tokens = fs::read_to_string(run.join("tokens.csv")).unwrap();
    assert!(tokens.starts_with("token,rank,p_hat,grad_norm_sq,accumulator_sum\n"));

    let out = freqsgd(&["analyze", "--run", s(&run)]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let report: serde_json::Value =
        serde_json::from_slice(&fs::read(run.join("report.json")).unwrap()).unwrap();
    assert!(report["pearson_r"].as_f64().is_some());
    assert!(report["gamma"].as_array().is_some_and(|g| !g.is_empty()));
}

#[test]
fn verify_prints_a_table() {
    let out = freqsgd(&["verify", "--seed", "3"]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stdout));
    let text = String::from_utf8_lossy(&out.stdout);
    assert!(text.lines().all(|l| l.starts_with("PASS")));
}
