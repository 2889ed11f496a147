use std::fs;
use std::path::Path;
use std::process::Command;

use bsm::experiment::{
    read_predictions, recompute_report, run_experiment_in, run_sweep_in, ExperimentConfig,
    SweepAxis, METRICS_HEADER, SWEEP_HEADER,
};
use bsm::Error;

const BASE: &str = r#"
[train]
method = "bsm"
noise_rate = 0.2
seed = 5
max_epochs = 6

[train.dataset]
kind = "two_moons"
n_train = 200
n_val = 80
generator_noise = 0.2

[estimator]
kind = "single"
"#;

fn base() -> ExperimentConfig {
    ExperimentConfig::from_toml(BASE).unwrap()
}

fn header(path: &Path) -> String {
    fs::read_to_string(path)
        .unwrap()
        .lines()
        .next()
        .unwrap()
        .to_string()
}

fn values(s: &[&str]) -> Vec<String> {
    s.iter().map(|v| v.to_string()).collect()
}

#[test]
fn run_writes_every_artifact_with_fixed_headers() {
    let dir = tempfile::tempdir().unwrap();
    let out = run_experiment_in(&base(), dir.path()).unwrap();
    let p = dir.path();
    assert_eq!(header(&p.join("metrics.csv")), METRICS_HEADER.join(","));
    assert_eq!(
        header(&p.join("reliability.csv")),
        "bin_lo,bin_hi,count,conf_mean,acc,gap"
    );
    assert_eq!(
        header(&p.join("referral.csv")),
        "rejected_fraction,accuracy,auc,n_retained"
    );
    assert_eq!(
        header(&p.join("threshold.csv")),
        "threshold,accuracy,n_retained"
    );
    assert_eq!(
        header(&p.join("distance.csv")),
        "sample_index,min_cosine_distance,similarity,uncertainty,correct"
    );
    assert_eq!(header(&p.join("correlation.csv")), "variable,rho,p_value");
    assert_eq!(
        header(&p.join("predictions.csv")),
        "index,label,p0,p1,uncertainty"
    );
    assert!(p.join("model_0.txt").exists());

    let json: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(p.join("metrics.json")).unwrap()).unwrap();
    assert_eq!(json["provenance"]["seed"], 5);
    assert_eq!(json["provenance"]["version"], env!("CARGO_PKG_VERSION"));
    assert_eq!(json["provenance"]["config_hash"], base().hash());
    let logs: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(p.join("train_log.json")).unwrap()).unwrap();
    assert_eq!(logs.as_array().unwrap().len(), 1);
    assert_eq!(out.report.estimator, "single");
    assert_eq!(
        fs::read_to_string(p.join("distance.csv"))
            .unwrap()
            .lines()
            .count(),
        81
    );
}

#[test]
fn metrics_recompute_bit_identically_from_predictions() {
    let dir = tempfile::tempdir().unwrap();
    let out = run_experiment_in(&base(), dir.path()).unwrap();
    let again = recompute_report(dir.path()).unwrap();
    assert_eq!(again, out.report);
    let batch = read_predictions(&dir.path().join("predictions.csv")).unwrap();
    assert_eq!(batch, out.batch);
}

#[test]
fn formats_select_report_files() {
    let mut cfg = base();
    cfg.output.formats = vec![bsm::experiment::ReportFormat::Json];
    let dir = tempfile::tempdir().unwrap();
    run_experiment_in(&cfg, dir.path()).unwrap();
    assert!(dir.path().join("metrics.json").exists());
    assert!(!dir.path().join("metrics.csv").exists());
}

#[test]
fn separable_blobs_report_perfect_accuracy() {
    let text = r#"
[train]
method = "ce"
seed = 1
max_epochs = 10

[train.dataset]
kind = "blobs"
n_train = 300
n_val = 100
generator_noise = 0.0

[estimator]
kind = "single"
"#;
    let dir = tempfile::tempdir().unwrap();
    let out = run_experiment_in(&ExperimentConfig::from_toml(text).unwrap(), dir.path()).unwrap();
    assert_eq!(out.report.accuracy, 1.0);
    assert_eq!(out.report.roc_auc, 1.0);
}

#[test]
fn ensemble_members_use_consecutive_seeds() {
    let mut cfg = base();
    cfg.estimator = bsm::experiment::EstimatorConfig::Ensemble { members: 3 };
    let dir = tempfile::tempdir().unwrap();
    let out = run_experiment_in(&cfg, dir.path()).unwrap();
    let seeds: Vec<u64> = out.logs.iter().map(|l| l.seed).collect();
    assert_eq!(seeds, vec![5, 6, 7]);
    assert_eq!(out.report.estimator, "ensemble_m3");
    assert!(dir.path().join("model_2.txt").exists());
}

#[test]
fn single_value_sweep_matches_run() {
    let dir = tempfile::tempdir().unwrap();
    let run = run_experiment_in(&base(), &dir.path().join("run")).unwrap();
    let (path, rows) = run_sweep_in(
        &base(),
        SweepAxis::Methods,
        &values(&["bsm"]),
        &dir.path().join("sweep"),
    )
    .unwrap();
    assert_eq!(rows[0].report.as_ref().unwrap(), &run.report);
    let metrics = fs::read_to_string(dir.path().join("run/metrics.csv")).unwrap();
    let sweep = fs::read_to_string(path).unwrap();
    let run_row = metrics.lines().nth(1).unwrap();
    let sweep_row = sweep.lines().nth(1).unwrap();
    assert_eq!(sweep_row, format!("methods,bsm,{run_row},"));
}

#[test]
fn sweep_records_failures_per_row() {
    let dir = tempfile::tempdir().unwrap();
    let (path, rows) = run_sweep_in(
        &base(),
        SweepAxis::NoiseRates,
        &values(&["0.1", "2.0", "abc", "0.3"]),
        dir.path(),
    )
    .unwrap();
    assert!(rows[0].report.is_ok() && rows[3].report.is_ok());
    assert!(rows[1].report.as_ref().unwrap_err().contains("noise_rate"));
    assert!(rows[2].report.is_err());
    assert_eq!(rows[3].report.as_ref().unwrap().seed, 5 + 3);
    let text = fs::read_to_string(path).unwrap();
    assert_eq!(text.lines().next().unwrap(), SWEEP_HEADER.join(","));
    assert_eq!(text.lines().count(), 5);
}

#[test]
fn sweeps_have_one_row_per_value() {
    let dir = tempfile::tempdir().unwrap();
    let alphas = values(&["0.3", "0.5", "0.8", "1.0", "32"]);
    let (_, rows) =
        run_sweep_in(&base(), SweepAxis::Alphas, &alphas, &dir.path().join("a")).unwrap();
    assert_eq!(rows.len(), 5);
    assert!(rows.iter().all(|r| r.report.is_ok()));

    let repeats = values(&["0", "1", "4", "8", "16", "32", "64", "128"]);
    let mut cfg = base();
    cfg.train.dataset.n_val = 30;
    cfg.train.max_epochs = 2;
    let (path, rows) =
        run_sweep_in(&cfg, SweepAxis::TtaRepeats, &repeats, &dir.path().join("t")).unwrap();
    let labels: Vec<String> = rows
        .iter()
        .map(|r| r.report.as_ref().unwrap().estimator.clone())
        .collect();
    assert_eq!(
        labels,
        repeats
            .iter()
            .map(|r| format!("tta{r}"))
            .collect::<Vec<_>>()
    );
    assert_eq!(fs::read_to_string(path).unwrap().lines().count(), 9);
    assert!(run_sweep_in(&cfg, SweepAxis::Alphas, &[], dir.path()).is_err());
}

#[test]
fn parse_errors_name_the_field() {
    let cases = [
        (BASE.replace("method = \"bsm\"\n", ""), "train.method"),
        (
            BASE.replace("kind = \"single\"", "kind = \"ensemble\""),
            "estimator.members",
        ),
        (BASE.replace("seed = 5", "seed = -5"), "train.seed"),
        (
            BASE.replace("n_val = 80", "n_val = 80\nn_test = 3"),
            "train.dataset",
        ),
    ];
    for (text, field) in cases {
        match ExperimentConfig::from_toml(&text) {
            Err(Error::Config { field: got, .. }) => {
                assert!(got.starts_with(field), "{got} vs {field}")
            }
            other => panic!("expected config error for {field}, got {other:?}"),
        }
    }
}

fn cli(args: &[&str], root: &Path) -> std::process::Output {
    Command::new(env!("CARGO_BIN_EXE_bsm"))
        .args(args)
        .env("BSM_OUTPUT_ROOT", root)
        .output()
        .unwrap()
}

#[test]
fn cli_run_report_and_errors() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("c.toml");
    fs::write(&cfg, BASE).unwrap();
    let cfg = cfg.to_str().unwrap();

    let out = cli(
        &[
            "run", cfg, "--method", "mixup_ce", "--seed", "9", "--out", "r",
        ],
        dir.path(),
    );
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let metrics = fs::read_to_string(dir.path().join("r/metrics.csv")).unwrap();
    let row = metrics.lines().nth(1).unwrap();
    assert!(
        row.starts_with("mixup_ce,0.2,single,") && row.ends_with(",9"),
        "{row}"
    );

    let out = cli(
        &["report", dir.path().join("r").to_str().unwrap()],
        dir.path(),
    );
    assert!(out.status.success());
    let report = fs::read_to_string(dir.path().join("r/report.csv")).unwrap();
    assert_eq!(report, metrics);

    let broken = dir.path().join("broken.toml");
    fs::write(&broken, BASE.replace("method = \"bsm\"\n", "")).unwrap();
    let out = cli(&["run", broken.to_str().unwrap()], dir.path());
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("train.method"));

    let out = cli(
        &["sweep", cfg, "--axis", "widths", "--values", "1"],
        dir.path(),
    );
    assert!(!out.status.success());
}
