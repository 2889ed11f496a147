//! Minibatch training under the four method regimes, with per-epoch
//! Beta-mixture refits for the bootstrapping loss and early stopping on
//! validation accuracy.

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::augment::{self, perturb, GammaSource, PerturbationPolicy};
use crate::data::{Dataset, DatasetSpec};
use crate::error::{invalid, Error, Result};
use crate::losses::{bsm_loss_with, ce_loss, mixup_ce_loss, Bootstrap, LossOutput};
use crate::matrix::Matrix;
use crate::metrics::argmax;
use crate::model::{backward_step, kaiming_init, AdamState, MlpModel, ModelShape, DEFAULT_DROPOUT};
use crate::noise_model::{self, fit_bmm, noisy_posterior, normalize_losses, BetaMixtureModel};
use crate::rng::{self, Stream};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    /// Plain cross-entropy.
    Ce,
    /// Cross-entropy on perturbed inputs.
    CeAug,
    /// Mixup pairs with the mixed cross-entropy.
    MixupCe,
    /// Mixup pairs with the bootstrapping loss and mixture-model weights.
    Bsm,
}

impl Method {
    pub const ALL: [Method; 4] = [Method::Ce, Method::CeAug, Method::MixupCe, Method::Bsm];

    pub fn name(self) -> &'static str {
        match self {
            Method::Ce => "ce",
            Method::CeAug => "ce_aug",
            Method::MixupCe => "mixup_ce",
            Method::Bsm => "bsm",
        }
    }

    fn uses_mixup(self) -> bool {
        matches!(self, Method::MixupCe | Method::Bsm)
    }
}

impl std::str::FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Method::ALL
            .into_iter()
            .find(|m| m.name() == s)
            .ok_or_else(|| invalid(format!("unknown method `{s}`")))
    }
}

fn default_alpha() -> f64 {
    augment::DEFAULT_MIXUP_ALPHA
}
fn default_lr() -> f64 {
    5e-4
}
fn default_lr_decay() -> f64 {
    0.95
}
fn default_weight_decay() -> f64 {
    5e-4
}
fn default_batch_size() -> usize {
    32
}
fn default_max_epochs() -> usize {
    100
}
fn default_patience() -> usize {
    20
}
fn default_warmup() -> usize {
    1
}
fn default_hidden() -> Vec<usize> {
    crate::model::DEFAULT_HIDDEN.to_vec()
}
fn default_dropout() -> f64 {
    DEFAULT_DROPOUT
}
fn default_em_iterations() -> usize {
    noise_model::DEFAULT_EM_ITERATIONS
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainConfig {
    pub method: Method,
    #[serde(default = "default_alpha")]
    pub alpha: f64,
    #[serde(default)]
    pub noise_rate: f64,
    #[serde(default = "default_lr")]
    pub learning_rate: f64,
    /// Per-epoch multiplicative learning-rate decay.
    #[serde(default = "default_lr_decay")]
    pub lr_decay: f64,
    #[serde(default = "default_weight_decay")]
    pub weight_decay: f64,
    #[serde(default = "default_batch_size")]
    pub batch_size: usize,
    #[serde(default = "default_max_epochs")]
    pub max_epochs: usize,
    #[serde(default = "default_patience")]
    pub patience: usize,
    #[serde(default = "default_warmup")]
    pub warmup_epochs: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub dataset: DatasetSpec,
    #[serde(default = "default_hidden")]
    pub hidden: Vec<usize>,
    #[serde(default = "default_dropout")]
    pub dropout: f64,
    #[serde(default = "default_em_iterations")]
    pub em_iterations: usize,
    /// Perturb training inputs regardless of method; `ce_aug` always does.
    #[serde(default)]
    pub augment: bool,
    #[serde(default)]
    pub augment_policy: PerturbationPolicy,
    #[serde(default)]
    pub bootstrap: Bootstrap,
}

impl TrainConfig {
    pub fn new(method: Method, seed: u64) -> Self {
        Self {
            method,
            alpha: default_alpha(),
            noise_rate: 0.0,
            learning_rate: default_lr(),
            lr_decay: default_lr_decay(),
            weight_decay: default_weight_decay(),
            batch_size: default_batch_size(),
            max_epochs: default_max_epochs(),
            patience: default_patience(),
            warmup_epochs: default_warmup(),
            seed,
            dataset: DatasetSpec::default(),
            hidden: default_hidden(),
            dropout: default_dropout(),
            em_iterations: default_em_iterations(),
            augment: false,
            augment_policy: PerturbationPolicy::default(),
            bootstrap: Bootstrap::Hard,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let field = |name: &str, ok: bool, msg: String| {
            if ok {
                Ok(())
            } else {
                Err(Error::Config {
                    field: name.into(),
                    message: msg,
                })
            }
        };
        field(
            "alpha",
            self.alpha > 0.0 && self.alpha.is_finite(),
            format!("{} must be > 0", self.alpha),
        )?;
        field(
            "noise_rate",
            (0.0..=1.0).contains(&self.noise_rate),
            format!("{} outside [0, 1]", self.noise_rate),
        )?;
        field(
            "learning_rate",
            self.learning_rate >= 0.0 && self.learning_rate.is_finite(),
            format!("{} must be finite and >= 0", self.learning_rate),
        )?;
        field(
            "lr_decay",
            self.lr_decay > 0.0 && self.lr_decay <= 1.0,
            format!("{} outside (0, 1]", self.lr_decay),
        )?;
        field(
            "weight_decay",
            self.weight_decay >= 0.0 && self.weight_decay.is_finite(),
            format!("{} must be finite and >= 0", self.weight_decay),
        )?;
        field("batch_size", self.batch_size >= 1, "must be >= 1".into())?;
        field("max_epochs", self.max_epochs >= 1, "must be >= 1".into())?;
        field(
            "dropout",
            (0.0..1.0).contains(&self.dropout),
            format!("{} outside [0, 1)", self.dropout),
        )?;
        field(
            "em_iterations",
            self.em_iterations >= 1,
            "must be >= 1".into(),
        )?;
        field(
            "hidden",
            !self.hidden.is_empty() && self.hidden.iter().all(|&h| h > 0),
            "need positive widths".into(),
        )?;
        self.augment_policy.validate().map_err(|e| Error::Config {
            field: "augment_policy".into(),
            message: e.to_string(),
        })?;
        self.dataset.validate().map_err(|e| Error::Config {
            field: "dataset".into(),
            message: e.to_string(),
        })
    }

    fn perturbs_inputs(&self) -> bool {
        self.augment || self.method == Method::CeAug
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub learning_rate: f64,
    /// Mean training objective over the epoch's minibatch samples.
    pub train_loss: f64,
    /// Mean per-sample cross-entropy on unmixed inputs after the epoch.
    pub train_ce: f64,
    /// Same, restricted to samples whose label was not flipped.
    pub clean_ce: Option<f64>,
    /// Same, restricted to samples whose label was flipped.
    pub flipped_ce: Option<f64>,
    /// Mean bootstrap weight used during this epoch.
    pub mean_w: f64,
    pub val_accuracy: f64,
    /// Mixture fitted at the end of this epoch (bsm only).
    pub bmm: Option<BetaMixtureModel>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainLog {
    pub method: Method,
    pub seed: u64,
    pub epochs: Vec<EpochRecord>,
    pub best_epoch: usize,
    pub best_val_accuracy: f64,
    pub stopped_early: bool,
}

impl TrainLog {
    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }
}

/// Trains with the default Beta-mixture fit.
pub fn train(config: &TrainConfig, dataset: &Dataset) -> Result<(MlpModel, TrainLog)> {
    let em_iterations = config.em_iterations;
    train_with(config, dataset, &mut |losses: &[f64]| {
        fit_bmm(losses, em_iterations)
    })
}

/// Trains with a caller-supplied noise model fit, called with the normalized
/// per-sample losses at the end of every post-warm-up epoch.
pub fn train_with(
    config: &TrainConfig,
    dataset: &Dataset,
    fit_noise_model: &mut dyn FnMut(&[f64]) -> Result<BetaMixtureModel>,
) -> Result<(MlpModel, TrainLog)> {
    config.validate()?;
    let train_set = dataset.train();
    let val_set = dataset.validation();
    if train_set.labels.len() < 2 || val_set.labels.is_empty() {
        return Err(invalid("need at least 2 training and 1 validation samples"));
    }
    let flipped = dataset.flipped_train_positions();
    let n = train_set.labels.len();
    let classes = train_set
        .labels
        .iter()
        .chain(&val_set.labels)
        .max()
        .map_or(2, |m| m + 1)
        .max(2);

    let shape = ModelShape::new(train_set.inputs.cols(), config.hidden.clone(), classes)?;
    let mut model = kaiming_init(&shape, config.dropout, config.seed)?;
    let mut adam = AdamState::new(shape.num_params());

    let mut shuffle_rng = rng::stream(config.seed, Stream::Shuffle);
    let mut mixup_rng = rng::stream(config.seed, Stream::Mixup);
    let mut augment_rng = rng::stream(config.seed, Stream::Augment);
    let mut dropout_rng = rng::stream(config.seed, Stream::Dropout);

    let mut is_flipped = vec![false; n];
    for &i in &flipped {
        is_flipped[i] = true;
    }

    // weights used in the current epoch, fit at the end of the previous one
    let mut weights = vec![0.0; n];
    let mut order: Vec<usize> = (0..n).collect();
    let mut log = TrainLog {
        method: config.method,
        seed: config.seed,
        epochs: Vec::new(),
        best_epoch: 0,
        best_val_accuracy: f64::NEG_INFINITY,
        stopped_early: false,
    };
    let mut best = model.clone();

    for epoch in 0..config.max_epochs {
        let lr = config.learning_rate * config.lr_decay.powi(epoch as i32);
        order.shuffle(&mut shuffle_rng);
        let mut loss_sum = 0.0;

        for batch in order.chunks(config.batch_size) {
            let inputs: Vec<Vec<f64>> = batch
                .iter()
                .map(|&i| {
                    let x = train_set.inputs.row(i);
                    if config.perturbs_inputs() {
                        perturb(x, &config.augment_policy, &mut augment_rng)
                    } else {
                        x.to_vec()
                    }
                })
                .collect();
            let labels: Vec<usize> = batch.iter().map(|&i| train_set.labels[i]).collect();

            // (mixed input, partner position within batch, gamma)
            let samples: Vec<(Vec<f64>, usize, f64)> =
                if config.method.uses_mixup() && batch.len() >= 2 {
                    let m = Matrix::from_rows(&inputs)?;
                    augment::mixup_batch_with(
                        &m,
                        &labels,
                        GammaSource::Beta {
                            alpha: config.alpha,
                        },
                        &mut mixup_rng,
                    )?
                    .into_iter()
                    .map(|p| (p.mixed_input, p.source_indices.1, p.gamma))
                    .collect()
                } else {
                    inputs
                        .into_iter()
                        .enumerate()
                        .map(|(k, x)| (x, k, 1.0))
                        .collect()
                };

            let mut grads = Vec::with_capacity(batch.len());
            let mut caches = Vec::with_capacity(batch.len());
            for (k, (x, partner, gamma)) in samples.into_iter().enumerate() {
                let pass = model
                    .forward(&x, Some(&mut dropout_rng))
                    .map_err(|e| at_epoch(e, epoch))?;
                let (li, lj) = (labels[k], labels[partner]);
                let out: LossOutput = match config.method {
                    Method::Ce | Method::CeAug => ce_loss(&pass.logits, li),
                    Method::MixupCe => mixup_ce_loss(&pass.logits, li, lj, gamma),
                    Method::Bsm => {
                        let (wi, wj) = (weights[batch[k]], weights[batch[partner]]);
                        bsm_loss_with(&pass.logits, li, lj, gamma, wi, wj, config.bootstrap)
                    }
                };
                if !out.value.is_finite() {
                    return Err(Error::TrainingDivergence {
                        epoch,
                        detail: format!("non-finite loss for training sample {}", batch[k]),
                    });
                }
                loss_sum += out.value;
                grads.push(out.grad_logits);
                caches.push(pass.cache);
            }
            backward_step(
                &mut model,
                &grads,
                &caches,
                &mut adam,
                lr,
                config.weight_decay,
            );
        }

        if model.params().iter().any(|p| !p.is_finite()) {
            return Err(Error::TrainingDivergence {
                epoch,
                detail: "non-finite parameters after update".into(),
            });
        }

        // no-gradient pass on unmixed, unperturbed inputs
        let mut raw = Vec::with_capacity(n);
        for (x, &y) in train_set.inputs.iter_rows().zip(&train_set.labels) {
            let pass = model.forward(x, None).map_err(|e| at_epoch(e, epoch))?;
            raw.push(ce_loss(&pass.logits, y).value);
        }
        let mean_of = |keep: bool| {
            let sel: Vec<f64> = raw
                .iter()
                .zip(&is_flipped)
                .filter(|(_, &f)| f == keep)
                .map(|(l, _)| *l)
                .collect();
            (!sel.is_empty()).then(|| sel.iter().sum::<f64>() / sel.len() as f64)
        };

        let mean_w = weights.iter().sum::<f64>() / n as f64;
        let mut bmm = None;
        if config.method == Method::Bsm && epoch + 1 >= config.warmup_epochs {
            let normalized = normalize_losses(&raw)?;
            let fitted = fit_noise_model(&normalized)?;
            for (w, &l) in weights.iter_mut().zip(&normalized) {
                *w = noisy_posterior(&fitted, l)?;
            }
            bmm = Some(fitted);
        }

        let val_accuracy = validation_accuracy(&model, &val_set.inputs, &val_set.labels)?;
        log.epochs.push(EpochRecord {
            epoch,
            learning_rate: lr,
            train_loss: loss_sum / n as f64,
            train_ce: raw.iter().sum::<f64>() / n as f64,
            clean_ce: mean_of(false),
            flipped_ce: mean_of(true),
            mean_w,
            val_accuracy,
            bmm,
        });

        if val_accuracy > log.best_val_accuracy {
            log.best_val_accuracy = val_accuracy;
            log.best_epoch = epoch;
            best = model.clone();
        } else if epoch - log.best_epoch >= config.patience {
            log.stopped_early = true;
            break;
        }
    }

    Ok((best, log))
}

fn at_epoch(e: Error, epoch: usize) -> Error {
    match e {
        Error::TrainingDivergence { detail, .. } => Error::TrainingDivergence { epoch, detail },
        other => other,
    }
}

fn validation_accuracy(model: &MlpModel, inputs: &Matrix, labels: &[usize]) -> Result<f64> {
    let mut hits = 0usize;
    for (x, &y) in inputs.iter_rows().zip(labels) {
        if argmax(&model.forward(x, None)?.logits) == y {
            hits += 1;
        }
    }
    Ok(hits as f64 / labels.len() as f64)
}
