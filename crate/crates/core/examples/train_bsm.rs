//! Trains a cross-entropy baseline and the bootstrapping-with-Mixup model on
//! noisy two-moons labels and compares their calibration.
//!
//! `cargo run --release --example train_bsm -- [seed] [noise_rate]`

use bsm::data::Dataset;
use bsm::estimators::single_forward;
use bsm::experiment::batch_metrics;
use bsm::trainer::{train, Method, TrainConfig};
use bsm::PredictionBatch;

fn main() -> bsm::Result<()> {
    let mut args = std::env::args().skip(1);
    let seed: u64 = args.next().map_or(0, |s| s.parse().expect("seed"));
    let eta: f64 = args.next().map_or(0.2, |s| s.parse().expect("noise rate"));

    for method in [Method::Ce, Method::Bsm] {
        let mut cfg = TrainConfig::new(method, seed);
        cfg.noise_rate = eta;
        let data = Dataset::build(&cfg.dataset, eta, seed)?;
        let (model, log) = train(&cfg, &data)?;

        let val = data.validation();
        let out = single_forward(&model, &val.inputs)?;
        let m = batch_metrics(&PredictionBatch::new(out.mean_probs, val.labels)?, 0.1)?;
        println!(
            "{:>4}: epochs {:3} (best {:3})  acc {:.3}  auc {:.4}  ece {:.4}  nll {:.4}",
            method.name(),
            log.epochs.len(),
            log.best_epoch,
            m.accuracy,
            m.roc_auc,
            m.ece,
            m.nll
        );
        if let Some(r) = log.epochs.get(log.best_epoch) {
            println!(
                "      at best epoch: clean ce {:.3}  flipped ce {:.3}  mean w {:.3}",
                r.clean_ce.unwrap_or(f64::NAN),
                r.flipped_ce.unwrap_or(f64::NAN),
                r.mean_w
            );
        }
    }
    Ok(())
}
