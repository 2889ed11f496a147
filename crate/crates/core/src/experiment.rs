//! Config-driven experiments: train, estimate on the validation split,
//! analyze, and write reproducible report files.
//!
//! A run directory holds:
//!
//! | file              | content                                                   |
//! |-------------------|-----------------------------------------------------------|
//! | `metrics.csv`     | one metrics row (see [`METRICS_HEADER`])                  |
//! | `metrics.json`    | the same metrics plus provenance                          |
//! | `reliability.csv` | `bin_lo,bin_hi,count,conf_mean,acc,gap`                   |
//! | `referral.csv`    | `rejected_fraction,accuracy,auc,n_retained`               |
//! | `threshold.csv`   | `threshold,accuracy,n_retained`                           |
//! | `distance.csv`    | per-sample min cosine distance, similarity, uncertainty   |
//! | `correlation.csv` | Spearman rho/p of similarity and of distance vs uncertainty |
//! | `predictions.csv` | labels, class probabilities and uncertainty per sample    |
//! | `train_log.json`  | one training log per trained model                        |
//! | `model_<m>.txt`   | model parameters                                          |
//!
//! Nothing time- or host-dependent is written, so rerunning a config
//! reproduces every file byte for byte.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::analysis::{distance_records, referral_curve, spearman, threshold_curve, Spearman};
use crate::augment::PerturbationPolicy;
use crate::data::Dataset;
use crate::error::{invalid, Error, Result};
use crate::estimators::{
    ensemble_predict, mc_dropout_predict, single_forward, tta_predict, EstimatorOutput,
};
use crate::matrix::Matrix;
use crate::metrics::{
    accuracy, batch_roc_auc, brier_score, expected_calibration_error,
    negative_log_likelihood_binary, PredictionBatch, DEFAULT_BIN_WIDTH,
};
use crate::model::MlpModel;
use crate::rng::{self, Stream};
use crate::trainer::{train, Method, TrainConfig, TrainLog};

pub const VERSION: &str = env!("CARGO_PKG_VERSION");
/// Environment variable that sets the root for relative output directories.
pub const OUTPUT_ROOT_ENV: &str = "BSM_OUTPUT_ROOT";
pub const METRICS_HEADER: [&str; 9] = [
    "method",
    "noise_rate",
    "estimator",
    "roc_auc",
    "ece",
    "brier",
    "nll",
    "accuracy",
    "seed",
];

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum EstimatorConfig {
    #[default]
    Single,
    Ensemble {
        members: usize,
    },
    McDropout {
        passes: usize,
        #[serde(default)]
        tau_inv: f64,
    },
    Tta {
        repeats: usize,
        policy: PerturbationPolicy,
    },
}

impl EstimatorConfig {
    pub fn name(&self) -> &'static str {
        match self {
            EstimatorConfig::Single => "single",
            EstimatorConfig::Ensemble { .. } => "ensemble",
            EstimatorConfig::McDropout { .. } => "mc_dropout",
            EstimatorConfig::Tta { .. } => "tta",
        }
    }

    /// Name with its size parameter, as written in metrics rows.
    pub fn label(&self) -> String {
        match self {
            EstimatorConfig::Single => "single".into(),
            EstimatorConfig::Ensemble { members } => format!("ensemble_m{members}"),
            EstimatorConfig::McDropout { passes, .. } => format!("mc_dropout_t{passes}"),
            EstimatorConfig::Tta { repeats, .. } => format!("tta{repeats}"),
        }
    }

    fn validate(&self) -> Result<()> {
        let bad = |field: &str, message: &str| Error::Config {
            field: format!("estimator.{field}"),
            message: message.into(),
        };
        match self {
            EstimatorConfig::Ensemble { members } if *members == 0 => {
                Err(bad("members", "must be >= 1"))
            }
            EstimatorConfig::McDropout { passes, .. } if *passes == 0 => {
                Err(bad("passes", "must be >= 1"))
            }
            EstimatorConfig::McDropout { tau_inv, .. }
                if !(*tau_inv >= 0.0 && tau_inv.is_finite()) =>
            {
                Err(bad("tau_inv", "must be finite and >= 0"))
            }
            EstimatorConfig::Tta { policy, .. } => {
                policy.validate().map_err(|e| bad("policy", &e.to_string()))
            }
            _ => Ok(()),
        }
    }
}

fn default_bin_width() -> f64 {
    DEFAULT_BIN_WIDTH
}
fn default_fractions() -> Vec<f64> {
    vec![0.0, 0.05, 0.1, 0.15, 0.2, 0.25, 0.3, 0.35, 0.4, 0.45, 0.5]
}
/// Entropy thresholds in nats, up to just above `ln 2`.
fn default_thresholds() -> Vec<f64> {
    (1..=28).map(|i| i as f64 / 40.0).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AnalysisConfig {
    #[serde(default = "default_bin_width")]
    pub bin_width: f64,
    #[serde(default = "default_fractions")]
    pub fractions: Vec<f64>,
    #[serde(default = "default_thresholds")]
    pub thresholds: Vec<f64>,
}

impl Default for AnalysisConfig {
    fn default() -> Self {
        Self {
            bin_width: default_bin_width(),
            fractions: default_fractions(),
            thresholds: default_thresholds(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ReportFormat {
    Csv,
    Json,
}

fn default_formats() -> Vec<ReportFormat> {
    vec![ReportFormat::Csv, ReportFormat::Json]
}
fn default_dir() -> PathBuf {
    PathBuf::from("out")
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputConfig {
    #[serde(default = "default_dir")]
    pub dir: PathBuf,
    #[serde(default = "default_formats")]
    pub formats: Vec<ReportFormat>,
}

impl Default for OutputConfig {
    fn default() -> Self {
        Self {
            dir: default_dir(),
            formats: default_formats(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub train: TrainConfig,
    #[serde(default)]
    pub estimator: EstimatorConfig,
    #[serde(default)]
    pub analysis: AnalysisConfig,
    #[serde(default)]
    pub output: OutputConfig,
}

impl ExperimentConfig {
    pub fn new(train: TrainConfig) -> Self {
        Self {
            train,
            estimator: EstimatorConfig::Single,
            analysis: AnalysisConfig::default(),
            output: OutputConfig::default(),
        }
    }

    /// Parses TOML text. Errors carry the dotted path of the offending field.
    pub fn from_toml(text: &str) -> Result<Self> {
        let de = toml::Deserializer::parse(text).map_err(|e| Error::Config {
            field: "<document>".into(),
            message: e.to_string(),
        })?;
        let cfg: Self = serde_path_to_error::deserialize(de).map_err(|e| {
            let path = e.path().to_string();
            let inner = e.into_inner();
            let message = inner.message().to_string();
            // missing fields are reported on their parent; name them fully
            let field = match message
                .strip_prefix("missing field `")
                .and_then(|m| m.strip_suffix('`'))
            {
                Some(name) if path == "." => name.to_string(),
                Some(name) => format!("{path}.{name}"),
                None => path,
            };
            Error::Config { field, message }
        })?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_toml(&fs::read_to_string(path)?)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn validate(&self) -> Result<()> {
        self.train.validate().map_err(|e| match e {
            Error::Config { field, message } => Error::Config {
                field: format!("train.{field}"),
                message,
            },
            other => other,
        })?;
        self.estimator.validate()?;
        if !(self.analysis.bin_width > 0.0 && self.analysis.bin_width <= 1.0) {
            return Err(Error::Config {
                field: "analysis.bin_width".into(),
                message: format!("{} outside (0, 1]", self.analysis.bin_width),
            });
        }
        if let Some(f) = self
            .analysis
            .fractions
            .iter()
            .find(|f| !(0.0..1.0).contains(*f))
        {
            return Err(Error::Config {
                field: "analysis.fractions".into(),
                message: format!("{f} outside [0, 1)"),
            });
        }
        if self.output.formats.is_empty() {
            return Err(Error::Config {
                field: "output.formats".into(),
                message: "at least one report format is required".into(),
            });
        }
        Ok(())
    }

    /// First 16 hex digits of the SHA-256 of the canonical TOML form, with
    /// the output section reset so relocating a run keeps its hash.
    pub fn hash(&self) -> String {
        let canonical = Self {
            output: OutputConfig::default(),
            ..self.clone()
        };
        let digest = Sha256::digest(canonical.to_toml().as_bytes());
        digest.iter().take(8).fold(String::new(), |mut s, b| {
            write!(s, "{b:02x}").unwrap();
            s
        })
    }

    /// Output directory, resolved against `BSM_OUTPUT_ROOT` when relative.
    pub fn resolved_output_dir(&self) -> PathBuf {
        match std::env::var_os(OUTPUT_ROOT_ENV) {
            Some(root) if self.output.dir.is_relative() => {
                PathBuf::from(root).join(&self.output.dir)
            }
            _ => self.output.dir.clone(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub config_hash: String,
    pub seed: u64,
    pub version: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub method: Method,
    pub noise_rate: f64,
    pub estimator: String,
    pub roc_auc: f64,
    pub ece: f64,
    pub brier: f64,
    pub nll: f64,
    pub accuracy: f64,
    pub seed: u64,
    pub provenance: Provenance,
}

impl MetricsReport {
    fn csv_fields(&self) -> [String; 9] {
        [
            self.method.name().to_string(),
            self.noise_rate.to_string(),
            self.estimator.clone(),
            self.roc_auc.to_string(),
            self.ece.to_string(),
            self.brier.to_string(),
            self.nll.to_string(),
            self.accuracy.to_string(),
            self.seed.to_string(),
        ]
    }
}

/// Calibration and discrimination metrics of a binary batch.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BatchMetrics {
    pub roc_auc: f64,
    pub ece: f64,
    pub brier: f64,
    pub nll: f64,
    pub accuracy: f64,
}

pub fn batch_metrics(batch: &PredictionBatch, bin_width: f64) -> Result<BatchMetrics> {
    Ok(BatchMetrics {
        roc_auc: batch_roc_auc(batch)?,
        ece: expected_calibration_error(batch, bin_width)?.0,
        brier: brier_score(batch)?,
        nll: negative_log_likelihood_binary(batch)?,
        accuracy: accuracy(batch)?,
    })
}

/// Everything an experiment produced, in memory.
#[derive(Debug, Clone)]
pub struct ExperimentOutcome {
    pub report: MetricsReport,
    pub dataset: Dataset,
    pub models: Vec<MlpModel>,
    pub logs: Vec<TrainLog>,
    pub estimate: EstimatorOutput,
    pub batch: PredictionBatch,
    pub similarity_correlation: Option<Spearman>,
    pub diagnostics: Vec<String>,
}

/// Seed of ensemble member `m`; member 0 uses the run seed.
pub fn member_seed(seed: u64, m: usize) -> u64 {
    seed.wrapping_add(m as u64)
}

/// Trains the configured model(s) and evaluates them, without touching disk.
pub fn evaluate(config: &ExperimentConfig) -> Result<ExperimentOutcome> {
    config.validate()?;
    let tc = &config.train;
    let dataset = Dataset::build(&tc.dataset, tc.noise_rate, tc.seed)?;
    let members = match config.estimator {
        EstimatorConfig::Ensemble { members } => members,
        _ => 1,
    };
    let mut models = Vec::with_capacity(members);
    let mut logs = Vec::with_capacity(members);
    for m in 0..members {
        let mut member = tc.clone();
        member.seed = member_seed(tc.seed, m);
        let (model, log) = train(&member, &dataset)?;
        models.push(model);
        logs.push(log);
    }

    let val = dataset.validation();
    let mut inference_rng = rng::stream(tc.seed, Stream::Inference);
    let estimate = match &config.estimator {
        EstimatorConfig::Single => single_forward(&models[0], &val.inputs)?,
        EstimatorConfig::Ensemble { .. } => ensemble_predict(&models, &val.inputs)?,
        EstimatorConfig::McDropout { passes, tau_inv } => mc_dropout_predict(
            &models[0],
            &val.inputs,
            *passes,
            *tau_inv,
            &mut inference_rng,
        )?,
        EstimatorConfig::Tta { repeats, policy } => tta_predict(
            &models[0],
            &val.inputs,
            policy,
            *repeats,
            &mut inference_rng,
        )?,
    };
    let batch = PredictionBatch::new(estimate.mean_probs.clone(), val.labels.clone())?;
    let m = batch_metrics(&batch, config.analysis.bin_width)?;

    let report = MetricsReport {
        method: tc.method,
        noise_rate: tc.noise_rate,
        estimator: config.estimator.label(),
        roc_auc: m.roc_auc,
        ece: m.ece,
        brier: m.brier,
        nll: m.nll,
        accuracy: m.accuracy,
        seed: tc.seed,
        provenance: Provenance {
            config_hash: config.hash(),
            seed: tc.seed,
            version: VERSION.into(),
        },
    };
    Ok(ExperimentOutcome {
        report,
        dataset,
        models,
        logs,
        estimate,
        batch,
        similarity_correlation: None,
        diagnostics: Vec::new(),
    })
}

fn write_csv<I, R>(path: &Path, header: &[&str], rows: I) -> Result<()>
where
    I: IntoIterator<Item = R>,
    R: IntoIterator<Item = String>,
{
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(header)?;
    for r in rows {
        w.write_record(r)?;
    }
    w.flush()?;
    Ok(())
}

fn opt(x: Option<f64>) -> String {
    x.map_or_else(String::new, |v| v.to_string())
}

/// Runs an experiment and writes every artifact under the output directory.
pub fn run_experiment(config: &ExperimentConfig) -> Result<ExperimentOutcome> {
    let dir = config.resolved_output_dir();
    run_experiment_in(config, &dir)
}

pub fn run_experiment_in(config: &ExperimentConfig, dir: &Path) -> Result<ExperimentOutcome> {
    let mut outcome = evaluate(config)?;
    fs::create_dir_all(dir)?;
    let report = &outcome.report;

    if config.output.formats.contains(&ReportFormat::Csv) {
        write_csv(
            &dir.join("metrics.csv"),
            &METRICS_HEADER,
            [report.csv_fields()],
        )?;
    }
    if config.output.formats.contains(&ReportFormat::Json) {
        fs::write(
            dir.join("metrics.json"),
            serde_json::to_string_pretty(report)? + "\n",
        )?;
    }
    fs::write(dir.join("config.toml"), config.to_toml())?;

    let batch = &outcome.batch;
    let (_, bins) = expected_calibration_error(batch, config.analysis.bin_width)?;
    write_csv(
        &dir.join("reliability.csv"),
        &["bin_lo", "bin_hi", "count", "conf_mean", "acc", "gap"],
        bins.bins.iter().map(|b| {
            [
                b.lo.to_string(),
                b.hi.to_string(),
                b.count.to_string(),
                b.conf_mean.to_string(),
                b.acc.to_string(),
                b.gap().to_string(),
            ]
        }),
    )?;

    let correctness = batch.correctness();
    let scores = batch.positive_scores()?;
    let labels: Vec<u8> = batch.labels().iter().map(|&l| l as u8).collect();
    let uncertainty = &outcome.estimate.uncertainty;

    let curve = referral_curve(
        uncertainty,
        &correctness,
        &scores,
        &labels,
        &config.analysis.fractions,
    )?;
    write_csv(
        &dir.join("referral.csv"),
        &["rejected_fraction", "accuracy", "auc", "n_retained"],
        curve.points.iter().map(|p| {
            [
                p.rejected_fraction.to_string(),
                p.accuracy.to_string(),
                opt(p.auc),
                p.n_retained.to_string(),
            ]
        }),
    )?;
    outcome.diagnostics.extend(curve.diagnostics);

    let (points, diag) = threshold_curve(uncertainty, &correctness, &config.analysis.thresholds)?;
    write_csv(
        &dir.join("threshold.csv"),
        &["threshold", "accuracy", "n_retained"],
        points.iter().map(|p| {
            [
                p.threshold.to_string(),
                p.accuracy.to_string(),
                p.n_retained.to_string(),
            ]
        }),
    )?;
    outcome.diagnostics.extend(diag);

    // features of the first (or only) model
    let model = &outcome.models[0];
    let bank = model.features(&outcome.dataset.train().inputs)?;
    let query = model.features(&outcome.dataset.validation().inputs)?;
    let (records, diag) = distance_records(&query, &bank, uncertainty, &correctness)?;
    outcome.diagnostics.extend(diag);
    write_csv(
        &dir.join("distance.csv"),
        &[
            "sample_index",
            "min_cosine_distance",
            "similarity",
            "uncertainty",
            "correct",
        ],
        records.iter().map(|r| {
            [
                r.sample_index.to_string(),
                r.min_cosine_distance.to_string(),
                r.similarity().to_string(),
                r.uncertainty.to_string(),
                (r.correct as u8).to_string(),
            ]
        }),
    )?;
    let unc: Vec<f64> = records.iter().map(|r| r.uncertainty).collect();
    let sim: Vec<f64> = records.iter().map(|r| r.similarity()).collect();
    let dist: Vec<f64> = records.iter().map(|r| r.min_cosine_distance).collect();
    let mut corr_rows = Vec::new();
    for (name, xs) in [("similarity", &sim), ("distance", &dist)] {
        match spearman(xs, &unc) {
            Ok(s) => {
                if name == "similarity" {
                    outcome.similarity_correlation = Some(s);
                }
                corr_rows.push([name.to_string(), s.rho.to_string(), s.p_value.to_string()]);
            }
            Err(e) => {
                outcome
                    .diagnostics
                    .push(format!("spearman({name}, uncertainty): {e}"));
                corr_rows.push([name.to_string(), String::new(), String::new()]);
            }
        }
    }
    write_csv(
        &dir.join("correlation.csv"),
        &["variable", "rho", "p_value"],
        corr_rows,
    )?;

    write_predictions(&dir.join("predictions.csv"), batch, uncertainty)?;
    let logs = serde_json::to_string_pretty(&outcome.logs)?;
    fs::write(dir.join("train_log.json"), logs + "\n")?;
    for (m, model) in outcome.models.iter().enumerate() {
        model.save(&dir.join(format!("model_{m}.txt")))?;
    }
    Ok(outcome)
}

fn write_predictions(path: &Path, batch: &PredictionBatch, uncertainty: &[f64]) -> Result<()> {
    let k = batch.num_classes();
    let mut header = vec!["index".to_string(), "label".to_string()];
    header.extend((0..k).map(|c| format!("p{c}")));
    header.push("uncertainty".into());
    let header: Vec<&str> = header.iter().map(String::as_str).collect();
    write_csv(
        path,
        &header,
        (0..batch.len()).map(|i| {
            let mut row = vec![i.to_string(), batch.labels()[i].to_string()];
            row.extend(batch.row(i).iter().map(f64::to_string));
            row.push(uncertainty[i].to_string());
            row
        }),
    )
}

/// Reads a `predictions.csv` written by a run back into a batch.
pub fn read_predictions(path: &Path) -> Result<PredictionBatch> {
    let mut r = csv::Reader::from_path(path)?;
    let headers = r.headers()?.clone();
    let k = headers.iter().filter(|h| h.starts_with('p')).count();
    let mut rows = Vec::new();
    let mut labels = Vec::new();
    for rec in r.records() {
        let rec = rec?;
        let field = |i: usize| -> Result<&str> {
            rec.get(i)
                .ok_or_else(|| invalid(format!("predictions row missing column {i}")))
        };
        labels.push(
            field(1)?
                .parse()
                .map_err(|e| invalid(format!("label: {e}")))?,
        );
        let row = (0..k)
            .map(|c| {
                field(2 + c)?
                    .parse::<f64>()
                    .map_err(|e| invalid(format!("probability: {e}")))
            })
            .collect::<Result<Vec<f64>>>()?;
        rows.push(row);
    }
    PredictionBatch::new(Matrix::from_rows(&rows)?, labels)
}

/// Recomputes metrics from a run directory's persisted predictions and its
/// stored config.
pub fn recompute_report(run_dir: &Path) -> Result<MetricsReport> {
    let config = ExperimentConfig::load(&run_dir.join("config.toml"))?;
    let batch = read_predictions(&run_dir.join("predictions.csv"))?;
    let m = batch_metrics(&batch, config.analysis.bin_width)?;
    Ok(MetricsReport {
        method: config.train.method,
        noise_rate: config.train.noise_rate,
        estimator: config.estimator.label(),
        roc_auc: m.roc_auc,
        ece: m.ece,
        brier: m.brier,
        nll: m.nll,
        accuracy: m.accuracy,
        seed: config.train.seed,
        provenance: Provenance {
            config_hash: config.hash(),
            seed: config.train.seed,
            version: VERSION.into(),
        },
    })
}

/// Writes a recomputed report as `report.csv` next to the predictions.
pub fn write_recomputed(run_dir: &Path, report: &MetricsReport) -> Result<PathBuf> {
    let path = run_dir.join("report.csv");
    write_csv(&path, &METRICS_HEADER, [report.csv_fields()])?;
    Ok(path)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepAxis {
    Alphas,
    NoiseRates,
    Methods,
    TtaRepeats,
    EnsembleSizes,
}

impl SweepAxis {
    pub fn name(self) -> &'static str {
        match self {
            SweepAxis::Alphas => "alphas",
            SweepAxis::NoiseRates => "noise_rates",
            SweepAxis::Methods => "methods",
            SweepAxis::TtaRepeats => "tta_repeats",
            SweepAxis::EnsembleSizes => "ensemble_sizes",
        }
    }

    /// Copy of `base` with this axis set to `value`.
    pub fn apply(self, base: &ExperimentConfig, value: &str) -> Result<ExperimentConfig> {
        let mut cfg = base.clone();
        let parse_f = || {
            value
                .parse::<f64>()
                .map_err(|e| invalid(format!("{}: `{value}`: {e}", self.name())))
        };
        let parse_u = || {
            value
                .parse::<usize>()
                .map_err(|e| invalid(format!("{}: `{value}`: {e}", self.name())))
        };
        match self {
            SweepAxis::Alphas => cfg.train.alpha = parse_f()?,
            SweepAxis::NoiseRates => cfg.train.noise_rate = parse_f()?,
            SweepAxis::Methods => cfg.train.method = value.parse()?,
            SweepAxis::TtaRepeats => {
                let policy = match &base.estimator {
                    EstimatorConfig::Tta { policy, .. } => *policy,
                    _ => PerturbationPolicy::default(),
                };
                cfg.estimator = EstimatorConfig::Tta {
                    repeats: parse_u()?,
                    policy,
                };
            }
            SweepAxis::EnsembleSizes => {
                cfg.estimator = EstimatorConfig::Ensemble {
                    members: parse_u()?,
                }
            }
        }
        Ok(cfg)
    }
}

impl std::str::FromStr for SweepAxis {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        [
            SweepAxis::Alphas,
            SweepAxis::NoiseRates,
            SweepAxis::Methods,
            SweepAxis::TtaRepeats,
            SweepAxis::EnsembleSizes,
        ]
        .into_iter()
        .find(|a| a.name() == s)
        .ok_or_else(|| invalid(format!("unknown sweep axis `{s}`")))
    }
}

/// One row of a sweep; `report` is absent when the member failed.
#[derive(Debug, Clone)]
pub struct SweepRow {
    pub value: String,
    pub report: std::result::Result<MetricsReport, String>,
}

pub const SWEEP_HEADER: [&str; 12] = [
    "axis",
    "value",
    "method",
    "noise_rate",
    "estimator",
    "roc_auc",
    "ece",
    "brier",
    "nll",
    "accuracy",
    "seed",
    "error",
];

/// One experiment per value, with seed `base + ordinal`, each in its own
/// subdirectory, consolidated into `sweep_<axis>.csv`. Member failures are
/// recorded in their row.
pub fn run_sweep(
    base: &ExperimentConfig,
    axis: SweepAxis,
    values: &[String],
) -> Result<(PathBuf, Vec<SweepRow>)> {
    run_sweep_in(base, axis, values, &base.resolved_output_dir())
}

pub fn run_sweep_in(
    base: &ExperimentConfig,
    axis: SweepAxis,
    values: &[String],
    dir: &Path,
) -> Result<(PathBuf, Vec<SweepRow>)> {
    if values.is_empty() {
        return Err(invalid("sweep needs at least one value"));
    }
    base.validate()?;
    fs::create_dir_all(dir)?;
    let mut rows = Vec::with_capacity(values.len());
    for (i, value) in values.iter().enumerate() {
        let report = axis
            .apply(base, value)
            .and_then(|mut cfg| {
                cfg.train.seed = base.train.seed.wrapping_add(i as u64);
                cfg.validate()?;
                let sub = dir.join(format!("{}_{i:03}", axis.name()));
                run_experiment_in(&cfg, &sub).map(|o| o.report)
            })
            .map_err(|e| e.to_string());
        rows.push(SweepRow {
            value: value.clone(),
            report,
        });
    }
    let path = dir.join(format!("sweep_{}.csv", axis.name()));
    write_csv(
        &path,
        &SWEEP_HEADER,
        rows.iter().map(|r| {
            let mut out = vec![axis.name().to_string(), r.value.clone()];
            match &r.report {
                Ok(rep) => {
                    out.extend(rep.csv_fields());
                    out.push(String::new());
                }
                Err(e) => {
                    out.extend(std::iter::repeat_n(String::new(), 9));
                    out.push(e.clone());
                }
            }
            out
        }),
    )?;
    Ok((path, rows))
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"
[train]
method = "bsm"
noise_rate = 0.2
seed = 4

[train.dataset]
kind = "two_moons"
n_train = 200
n_val = 50
generator_noise = 0.2

[estimator]
kind = "tta"
repeats = 4
policy = { noise_sigma = 0.05, scale_jitter = 0.0 }
"#;

    #[test]
    fn parses_and_defaults() {
        let cfg = ExperimentConfig::from_toml(MINIMAL).unwrap();
        assert_eq!(cfg.train.method, Method::Bsm);
        assert_eq!(cfg.train.batch_size, 32);
        assert_eq!(cfg.train.patience, 20);
        assert_eq!(cfg.analysis.bin_width, 0.1);
        assert_eq!(cfg.estimator.label(), "tta4");
        let again = ExperimentConfig::from_toml(&cfg.to_toml()).unwrap();
        assert_eq!(cfg, again);
        assert_eq!(cfg.hash(), again.hash());
        assert_eq!(cfg.hash().len(), 16);
        let mut moved = cfg.clone();
        moved.output.dir = "elsewhere".into();
        assert_eq!(moved.hash(), cfg.hash());
        moved.train.seed += 1;
        assert_ne!(moved.hash(), cfg.hash());
    }

    #[test]
    fn missing_method_names_the_field() {
        let text = MINIMAL.replace("method = \"bsm\"\n", "");
        match ExperimentConfig::from_toml(&text) {
            Err(Error::Config { field, message }) => {
                assert_eq!(field, "train.method");
                assert!(message.contains("method"));
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn estimator_parameters_are_required_per_kind() {
        let text = MINIMAL.replace("repeats = 4\n", "");
        match ExperimentConfig::from_toml(&text) {
            Err(Error::Config { field, .. }) => assert!(field.contains("repeats"), "{field}"),
            other => panic!("unexpected {other:?}"),
        }
        let text = MINIMAL.replace("repeats = 4\n", "repeats = 4\nmembers = 3\n");
        assert!(ExperimentConfig::from_toml(&text).is_err());
    }

    #[test]
    fn unknown_keys_and_bad_values_are_rejected() {
        assert!(
            ExperimentConfig::from_toml(&MINIMAL.replace("seed = 4", "seed = 4\nsed = 1")).is_err()
        );
        match ExperimentConfig::from_toml(&MINIMAL.replace("noise_rate = 0.2", "noise_rate = 1.5"))
        {
            Err(Error::Config { field, .. }) => assert_eq!(field, "train.noise_rate"),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn sweep_axes_apply() {
        let cfg = ExperimentConfig::from_toml(MINIMAL).unwrap();
        assert_eq!(
            SweepAxis::Alphas.apply(&cfg, "32").unwrap().train.alpha,
            32.0
        );
        assert_eq!(
            SweepAxis::EnsembleSizes.apply(&cfg, "5").unwrap().estimator,
            EstimatorConfig::Ensemble { members: 5 }
        );
        assert_eq!(
            SweepAxis::Methods.apply(&cfg, "ce").unwrap().train.method,
            Method::Ce
        );
        assert!(SweepAxis::TtaRepeats.apply(&cfg, "-1").is_err());
        assert_eq!(
            "noise_rates".parse::<SweepAxis>().unwrap(),
            SweepAxis::NoiseRates
        );
    }
}
